"""Recurrent actor-critic: embedding, stacked LSTM, soft attention, heads.

The same code path serves single-step acting (batch 1, length 1, no tape) and
recurrent minibatch training over stored sequences.
"""

from dataclasses import dataclass, asdict, replace

import numpy as np

from . import layers as L
from . import tensor as T


@dataclass(frozen=True)
class PolicyArch:
    obs_dim: int = 14
    hidden: int = 128
    n_layers: int = 2
    attention: bool = True
    window: int = 3
    dropout: float = 0.1
    head_sizes: tuple = (4, 3, 3, 3)

    def to_dict(self):
        d = asdict(self)
        d["head_sizes"] = list(self.head_sizes)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["head_sizes"] = tuple(d["head_sizes"])
        return cls(**d)

    def single_lstm(self):
        """The ablation: one LSTM layer, attention disabled."""
        return replace(self, n_layers=1, attention=False)


@dataclass
class Carry:
    """Recurrent state between steps: per-layer (h, c) and the previous
    ``window - 1`` top-layer hidden states with their validity mask."""

    h: np.ndarray  # (layers, B, d)
    c: np.ndarray  # (layers, B, d)
    hist: np.ndarray  # (B, window-1, d), oldest first
    hist_mask: np.ndarray  # (B, window-1) bool

    @classmethod
    def zeros(cls, arch, batch=1):
        d = arch.hidden
        k = arch.window - 1
        return cls(np.zeros((arch.n_layers, batch, d)), np.zeros((arch.n_layers, batch, d)),
                   np.zeros((batch, k, d)), np.zeros((batch, k), dtype=bool))

    def copy(self):
        return Carry(self.h.copy(), self.c.copy(), self.hist.copy(), self.hist_mask.copy())

    def take(self, idx):
        return Carry(self.h[:, idx], self.c[:, idx], self.hist[idx], self.hist_mask[idx])

    @staticmethod
    def concat(carries):
        return Carry(np.concatenate([c.h for c in carries], axis=1),
                     np.concatenate([c.c for c in carries], axis=1),
                     np.concatenate([c.hist for c in carries], axis=0),
                     np.concatenate([c.hist_mask for c in carries], axis=0))


@dataclass
class PolicyOutput:
    logits: list  # per head, Tensor (B, T, n_k)
    values: T.Tensor  # (B, T)
    carry: Carry
    attention: np.ndarray  # (B, T, window); weight 1 on the newest state when disabled


def init_policy(arch, rng):
    params = {}
    d = arch.hidden
    L.init_linear(params, rng, "embed", arch.obs_dim, d)
    n_in = d
    for layer in range(arch.n_layers):
        L.init_lstm(params, rng, f"lstm{layer}", n_in, d)
        n_in = d
    if arch.attention:
        params["attn.w"] = L.param(L.xavier_uniform(rng, d, 1, shape=(d,)), "attn.w")
        params["attn.b"] = L.param(np.zeros(1), "attn.b")
    for k, n in enumerate(arch.head_sizes):
        # small actor gain keeps the initial policy close to uniform
        L.init_linear(params, rng, f"head{k}", 2 * d, n, gain=0.01)
    L.init_linear(params, rng, "critic", 2 * d, 1)
    return params


def sample_dropout_masks(arch, rng, batch, steps):
    d = arch.hidden
    masks = {"embed": L.dropout_mask(rng, (batch, steps, d), arch.dropout)}
    if arch.n_layers > 1:
        masks["inter"] = L.dropout_mask(rng, (batch, steps, arch.n_layers - 1, d), arch.dropout)
    return masks


def forward(params, arch, obs, carry, resets=None, masks=None):
    """Run the network over ``obs`` of shape (B, T, obs_dim).

    ``resets[b, t]`` zeroes the recurrent state and history before step t
    (episode start). ``masks`` are dropout multipliers from
    :func:`sample_dropout_masks`; ``None`` means evaluation mode.
    """
    obs = np.asarray(obs, dtype=np.float64)
    if obs.ndim != 3 or obs.shape[2] != arch.obs_dim:
        raise ValueError(f"observation batch must be (B, T, {arch.obs_dim}), got {obs.shape}")
    B, steps, _ = obs.shape
    w = arch.window
    hs = [T.Tensor(carry.h[i]) for i in range(arch.n_layers)]
    cs = [T.Tensor(carry.c[i]) for i in range(arch.n_layers)]
    hist = [T.Tensor(carry.hist[:, j]) for j in range(w - 1)]
    hist_mask = [carry.hist_mask[:, j].copy() for j in range(w - 1)]

    head_steps = [[] for _ in arch.head_sizes]
    value_steps = []
    attn_out = np.zeros((B, steps, w))
    for t in range(steps):
        if resets is not None and np.any(resets[:, t]):
            keep = (~resets[:, t]).astype(np.float64)[:, None]
            hs = [h * keep for h in hs]
            cs = [c * keep for c in cs]
            hist_mask = [m & ~resets[:, t] for m in hist_mask]
        e = T.relu(L.linear(params, "embed", T.Tensor(obs[:, t])))
        if masks is not None:
            e = e * masks["embed"][:, t]
        inp = e
        for layer in range(arch.n_layers):
            hs[layer], cs[layer] = L.lstm_cell(params, f"lstm{layer}", inp, hs[layer], cs[layer])
            inp = hs[layer]
            if masks is not None and layer < arch.n_layers - 1:
                inp = inp * masks["inter"][:, t, layer]
        top = hs[-1]
        hist.append(top)
        hist_mask.append(np.ones(B, dtype=bool))
        hist, hist_mask = hist[-w:], hist_mask[-w:]
        if arch.attention:
            H = T.stack(hist, axis=1)
            M = np.stack(hist_mask, axis=1)
            ctx, alpha = L.attention(params, "attn", H, M)
            attn_out[:, t, w - len(hist):] = alpha.data
        else:
            ctx = top
            attn_out[:, t, -1] = 1.0
        feat = T.concat([ctx, e], axis=1)
        for k in range(len(arch.head_sizes)):
            head_steps[k].append(L.linear(params, f"head{k}", feat))
        value_steps.append(T.reshape(L.linear(params, "critic", feat), (B,)))

    logits = [T.stack(hs_k, axis=1) for hs_k in head_steps]
    values = T.stack(value_steps, axis=1)
    # the carried window is the newest w-1 top-layer states, current included
    k = w - 1
    new_hist = np.zeros((B, k, arch.hidden))
    new_mask = np.zeros((B, k), dtype=bool)
    if k:
        for j, (hj, mj) in enumerate(zip(hist[-k:], hist_mask[-k:])):
            new_hist[:, j] = hj.data
            new_mask[:, j] = mj
    carry_out = Carry(np.stack([h.data for h in hs]), np.stack([c.data for c in cs]),
                      new_hist, new_mask)
    return PolicyOutput(logits, values, carry_out, attn_out)
