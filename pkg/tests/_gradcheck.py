"""Central finite-difference oracle for the toy recurrent actor-critic."""

import numpy as np

from attnscale.neural import Carry, PolicyArch, forward, init_policy, sample_dropout_masks
from attnscale.neural.distributions import joint_entropy, joint_log_prob

TOY = PolicyArch(hidden=4, window=2)
H = 1e-5
# relative error denominators are floored so that FD roundoff on gradients
# near zero is not reported as a mismatch
FLOOR = 1e-3


def toy_problem(seed, arch=TOY, batch=2, steps=4):
    rng = np.random.default_rng(seed)
    params = init_policy(arch, rng)
    for p in params.values():
        # move off the tiny-gain init so every block carries signal
        p.data = p.data + rng.normal(0.0, 0.3, p.shape)
    obs = rng.normal(size=(batch, steps, arch.obs_dim))
    actions = np.stack([rng.integers(0, n, size=(batch, steps)) for n in arch.head_sizes], -1)
    carry = Carry.zeros(arch, batch)
    carry.h = rng.normal(size=carry.h.shape)
    carry.c = rng.normal(size=carry.c.shape)
    carry.hist = rng.normal(size=carry.hist.shape)
    carry.hist_mask[:] = True
    resets = np.zeros((batch, steps), bool)
    resets[1, 2] = True
    masks = sample_dropout_masks(arch, rng, batch, steps)
    weights = rng.normal(size=(batch, steps))

    def loss():
        out = forward(params, arch, obs, carry, resets, masks)
        lp, lps = joint_log_prob(out.logits, actions)
        return ((lp * weights).sum() + (out.values * out.values).mean()
                + joint_entropy(lps).mean())

    return params, loss, rng


def max_relative_error(seed, coords_per_block=2, arch=TOY):
    params, loss, rng = toy_problem(seed, arch)
    loss().backward()
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        grad = p.grad.reshape(-1)
        picks = rng.choice(flat.size, size=min(coords_per_block, flat.size), replace=False)
        for i in picks:
            old = flat[i]
            flat[i] = old + H
            up = loss().item()
            flat[i] = old - H
            down = loss().item()
            flat[i] = old
            numeric = (up - down) / (2 * H)
            err = abs(grad[i] - numeric) / max(abs(grad[i]), abs(numeric), FLOOR)
            worst = max(worst, err)
    return worst
