"""PPO and Double DQN training loops, plus greedy evaluation.

PPO follows the usual collect/update cycle: 512-step rollouts, GAE, then K
epochs over minibatches of contiguous 16-step sequences replayed from their
stored recurrent state. The loss is the clipped surrogate with an adaptive KL
penalty, a value MSE term and an entropy bonus.
"""

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .agents import ReplayBuffer, copy_params, ddqn_targets, joint_index, q_values
from .env import AutoscaleEnv
from .neural import tensor as T
from .neural.distributions import joint_entropy, joint_log_prob, kl_from_old
from .neural.optim import Adam, clip_grad_norm
from .neural.policy import Carry, forward, sample_dropout_masks

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, msg, last_good=None):
        super().__init__(msg)
        self.last_good = last_good


@dataclass
class PpoConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.93
    clip: float = 0.2
    ent_coef: float = 0.01
    vf_coef: float = 0.5
    lr: float = 2e-4
    rollout: int = 512
    minibatch: int = 128
    epochs: int = 10
    seq_len: int = 16
    kl_target: float = 0.01
    kl_beta: float = 0.01
    max_grad_norm: float = 0.5
    normalize_advantages: bool = True


@dataclass
class DdqnConfig:
    lr: float = 1e-4
    gamma: float = 0.99
    batch: int = 128
    buffer: int = 50_000
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.4
    target_sync: int = 500
    learning_starts: int = 128
    max_grad_norm: float = 10.0


@dataclass
class TrainConfig:
    passes: int = 1  # sweeps over the training days; one episode per day
    checkpoint_every: int = 0  # updates between periodic checkpoints (0 = final only)


# ---------------------------------------------------------------- primitives

def compute_gae(rewards, values, dones, gamma, lam):
    """Generalized advantage estimates and returns.

    ``values`` has one more entry than ``rewards``: the bootstrap value of the
    state after the last step. ``dones[t]`` marks that the episode ended at
    step t, which cuts both the bootstrap and the recursion.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = rewards.shape[0]
    if values.shape[0] != n + 1 or dones.shape[0] != n:
        raise ValueError("need len(values) == len(rewards) + 1 == len(dones) + 1")
    adv = kernels.gae(rewards, values[:n], dones, values[n], gamma, lam)
    return adv, adv + values[:n]


def gae_explicit(rewards, values, dones, gamma, lam):
    """Reference GAE as the explicit discounted sum of TD residuals."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    n = len(rewards)
    deltas = rewards + gamma * values[1:] * (1.0 - dones) - values[:n]
    adv = np.zeros(n)
    for t in range(n):
        coef = 1.0
        for l in range(t, n):
            adv[t] += coef * deltas[l]
            coef *= gamma * lam * (1.0 - dones[l])
            if coef == 0.0:
                break
    return adv


def lr_at(step, total_steps, base_lr=2e-4):
    """Cosine decay from ``base_lr`` at step 0 to 0 at ``total_steps``."""
    if total_steps <= 0:
        return 0.0
    if step > total_steps:
        warnings.warn(f"lr_at: step {step} beyond schedule end {total_steps}; using 0")
        return 0.0
    if step < 0:
        raise ValueError("step must be nonnegative")
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * step / total_steps))


def adapt_kl_beta(beta, observed_kl, target):
    if beta <= 0:
        raise ValueError("beta must be positive")
    if observed_kl > 2.0 * target:
        return beta * 2.0
    if observed_kl < target / 2.0:
        return beta / 2.0
    return beta


def normalize(x, mask=None, eps=1e-8):
    x = np.asarray(x, dtype=np.float64)
    if mask is None:
        return (x - x.mean()) / (x.std() + eps)
    vals = x[mask]
    out = np.zeros_like(x)
    out[mask] = (vals - vals.mean()) / (vals.std() + eps)
    return out


# ---------------------------------------------------------------- rollouts

class RolloutBuffer:
    """On-policy transitions plus the recurrent state before each step."""

    def __init__(self, capacity=512):
        self.capacity = capacity
        self.clear()

    def clear(self):
        self.obs, self.actions, self.log_probs, self.values = [], [], [], []
        self.rewards, self.dones, self.resets, self.carries = [], [], [], []
        self.breakdowns = []

    def __len__(self):
        return len(self.obs)

    @property
    def full(self):
        return len(self) >= self.capacity

    def add(self, obs, action, log_prob, value, reward, done, reset, carry, breakdown=None):
        self.obs.append(np.asarray(obs, dtype=np.float64))
        self.actions.append(action.as_tuple() if hasattr(action, "as_tuple") else tuple(action))
        self.log_probs.append(float(log_prob))
        self.values.append(float(value))
        self.rewards.append(float(reward))
        self.dones.append(bool(done))
        self.resets.append(bool(reset))
        self.carries.append(carry)
        self.breakdowns.append(breakdown)

    def sequences(self, seq_len):
        n = len(self)
        return [(s, min(seq_len, n - s)) for s in range(0, n, seq_len)]


@dataclass
class SequenceBatch:
    obs: np.ndarray  # (S, T, obs_dim)
    actions: np.ndarray  # (S, T, heads)
    resets: np.ndarray  # (S, T) bool
    valid: np.ndarray  # (S, T) bool
    advantages: np.ndarray
    returns: np.ndarray
    carry: Carry
    masks: dict = None
    old_log_prob: np.ndarray = None
    old_log_softmax: list = None

    def take(self, idx):
        return SequenceBatch(
            self.obs[idx], self.actions[idx], self.resets[idx], self.valid[idx],
            self.advantages[idx], self.returns[idx], self.carry.take(idx),
            None if self.masks is None else {k: v[idx] for k, v in self.masks.items()},
            None if self.old_log_prob is None else self.old_log_prob[idx],
            None if self.old_log_softmax is None else [lp[idx] for lp in self.old_log_softmax])


def build_sequences(buf, advantages, returns, seq_len):
    spans = buf.sequences(seq_len)
    S = len(spans)
    obs_dim = buf.obs[0].shape[0]
    heads = len(buf.actions[0])
    obs = np.zeros((S, seq_len, obs_dim))
    actions = np.zeros((S, seq_len, heads), dtype=np.int64)
    resets = np.zeros((S, seq_len), dtype=bool)
    valid = np.zeros((S, seq_len), dtype=bool)
    adv = np.zeros((S, seq_len))
    ret = np.zeros((S, seq_len))
    carries = []
    for i, (s, n) in enumerate(spans):
        obs[i, :n] = buf.obs[s:s + n]
        actions[i, :n] = buf.actions[s:s + n]
        resets[i, :n] = buf.resets[s:s + n]
        resets[i, 0] = False  # the stored carry already reflects an episode start
        valid[i, :n] = True
        adv[i, :n] = advantages[s:s + n]
        ret[i, :n] = returns[s:s + n]
        carries.append(buf.carries[s])
    return SequenceBatch(obs, actions, resets, valid, adv, ret, Carry.concat(carries))


def _masked_mean(x, valid, n):
    return T.tsum(x * valid.astype(np.float64)) * (1.0 / n)


def ppo_loss(batch, params, arch, cfg, beta):
    """Loss and diagnostics for one minibatch of sequences.

    ``batch.old_log_prob``/``old_log_softmax`` are the anchor policy's values
    under the same dropout masks, so the first minibatch of an update has
    ratios of exactly one.
    """
    out = forward(params, arch, batch.obs, batch.carry, batch.resets, batch.masks)
    valid = batch.valid
    n = max(1, int(valid.sum()))
    log_prob, lps = joint_log_prob(out.logits, batch.actions)
    adv = batch.advantages
    if cfg.normalize_advantages:
        adv = normalize(adv, valid)
    ratio = T.exp(log_prob - batch.old_log_prob)
    surr = T.minimum(ratio * adv, T.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv)
    policy_loss = -_masked_mean(surr, valid, n)
    kl = _masked_mean(kl_from_old(batch.old_log_softmax, lps), valid, n)
    value_loss = _masked_mean(T.square(out.values - batch.returns), valid, n)
    entropy = _masked_mean(joint_entropy(lps), valid, n)
    loss = policy_loss + beta * kl + cfg.vf_coef * value_loss - cfg.ent_coef * entropy
    r = ratio.data[valid]
    diag = {
        "loss": loss.item(), "policy_loss": policy_loss.item(), "value_loss": value_loss.item(),
        "entropy": entropy.item(), "approx_kl": kl.item(),
        "clip_frac": float(np.mean(np.abs(r - 1.0) > cfg.clip)),
        "ratio_min": float(r.min()), "ratio_max": float(r.max()),
    }
    return loss, diag


def anchor_policy(batch, params, arch):
    """Fill ``old_log_prob``/``old_log_softmax`` from the current parameters."""
    with T.no_grad():
        out = forward(params, arch, batch.obs, batch.carry, batch.resets, batch.masks)
        lp, lps = joint_log_prob(out.logits, batch.actions)
    batch.old_log_prob = lp.data
    batch.old_log_softmax = [x.data for x in lps]
    return batch


class PpoTrainer:
    """Owns the optimizer and KL coefficient for one PPO agent."""

    def __init__(self, agent, cfg, rng):
        self.agent = agent
        self.cfg = cfg
        self.rng = rng
        self.optimizer = Adam(agent.params, lr=cfg.lr)
        self.beta = cfg.kl_beta
        self.updates = 0
        self.first_minibatch_diag = None

    def update(self, buf, last_value, lr):
        """One PPO update on a (possibly partial) rollout; returns diagnostics."""
        cfg = self.cfg
        agent = self.agent
        values = np.array(buf.values + [last_value])
        adv, ret = compute_gae(buf.rewards, values, buf.dones, cfg.gamma, cfg.gae_lambda)
        if not np.all(np.isfinite(adv)):
            raise TrainingDiverged("non-finite advantages")
        batch = build_sequences(buf, adv, ret, cfg.seq_len)
        S = batch.obs.shape[0]
        batch.masks = sample_dropout_masks(agent.arch, self.rng, S, cfg.seq_len)
        per_mb = max(1, cfg.minibatch // cfg.seq_len)
        first_order = self.rng.permutation(S)
        # anchor on the exact slices the first epoch replays: BLAS summation order
        # depends on batch size, and a whole-rollout pass would differ in the last ulp
        batch.old_log_prob = np.zeros(batch.valid.shape)
        batch.old_log_softmax = [np.zeros(batch.valid.shape + (n,)) for n in agent.arch.head_sizes]
        for start in range(0, S, per_mb):
            idx = first_order[start:start + per_mb]
            sub = anchor_policy(batch.take(idx), agent.params, agent.arch)
            batch.old_log_prob[idx] = sub.old_log_prob
            for full, part in zip(batch.old_log_softmax, sub.old_log_softmax):
                full[idx] = part
        diags = []
        self.first_minibatch_diag = None
        for epoch in range(cfg.epochs):
            order = first_order if epoch == 0 else self.rng.permutation(S)
            epoch_diags = []
            for start in range(0, S, per_mb):
                mb = batch.take(order[start:start + per_mb])
                loss, diag = ppo_loss(mb, agent.params, agent.arch, cfg, self.beta)
                if not math.isfinite(diag["loss"]):
                    raise TrainingDiverged("non-finite loss")
                if self.first_minibatch_diag is None:
                    self.first_minibatch_diag = dict(diag)
                self.optimizer.zero_grad()
                loss.backward()
                diag["grad_norm"] = clip_grad_norm(agent.params, cfg.max_grad_norm)
                self.optimizer.step(lr)
                epoch_diags.append(diag)
            diags = epoch_diags
        self.optimizer.zero_grad()
        if diags:
            mean_kl = float(np.mean([d["approx_kl"] for d in diags]))
            self.beta = adapt_kl_beta(self.beta, mean_kl, cfg.kl_target)
        self.updates += 1
        summary = {k: float(np.mean([d[k] for d in diags])) for k in
                   ("loss", "policy_loss", "value_loss", "entropy", "approx_kl", "clip_frac")} \
            if diags else {k: 0.0 for k in ("loss", "policy_loss", "value_loss", "entropy",
                                             "approx_kl", "clip_frac")}
        return summary


# ---------------------------------------------------------------- loops

TRAIN_LOG_COLUMNS = ("update_idx", "lr", "loss", "policy_loss", "value_loss", "entropy",
                     "approx_kl", "clip_frac", "mean_reward", "beta", "steps",
                     "r_slo", "r_cpu", "r_stab", "r_fcst", "r_succ")


def _reward_means(breakdowns):
    out = {}
    for k in ("r_slo", "r_cpu", "r_stab", "r_fcst", "r_succ"):
        vals = [getattr(b, k) for b in breakdowns if b is not None]
        out[k] = float(np.mean(vals)) if vals else 0.0
    return out


def train_ppo(agent, days, settings, ppo_cfg, train_cfg, explore_rng, update_rng, sim_rng,
              on_update=None):
    """Train a PPO agent on ``days``; returns ``(trainer, log_rows)``.

    ``on_update(trainer, row)`` is called after every update (checkpointing).
    """
    env = AutoscaleEnv(days, settings, sim_rng)
    trainer = PpoTrainer(agent, ppo_cfg, update_rng)
    n_episodes = train_cfg.passes * len(days)
    total_steps = sum(len(days[i % len(days)]) for i in range(n_episodes))
    total_updates = math.ceil(total_steps / ppo_cfg.rollout) if total_steps else 0
    buf = RolloutBuffer(ppo_cfg.rollout)
    rows = []

    def do_update(last_value):
        lr = lr_at(trainer.updates, total_updates, ppo_cfg.lr)
        mean_reward = float(np.mean(buf.rewards))
        steps = len(buf)
        means = _reward_means(buf.breakdowns)
        summary = trainer.update(buf, last_value, lr)
        row = {"update_idx": trainer.updates - 1, "lr": lr, **summary,
               "mean_reward": mean_reward, "beta": trainer.beta, "steps": steps, **means}
        rows.append(row)
        log.info("update %d lr=%.2e loss=%.4f kl=%.5f reward=%.4f", row["update_idx"], lr,
                 row["loss"], row["approx_kl"], mean_reward)
        buf.clear()
        if on_update is not None:
            on_update(trainer, row)

    for ep in range(n_episodes):
        obs = env.reset(ep % len(days))
        agent.begin_episode()
        first = True
        done = False
        while not done:
            carry = agent.carry
            action, aux = agent.act(obs, explore_rng, explore=True)
            next_obs, rb, done, _ = env.step(action)
            buf.add(obs, action, aux["log_prob"], aux["value"], rb.total, done, first, carry, rb)
            first = False
            obs = next_obs
            if buf.full:
                do_update(0.0 if done else agent.value(next_obs))
    if len(buf):
        do_update(0.0)
    return trainer, rows


def epsilon_at(step, total_steps, cfg):
    horizon = max(1, int(cfg.eps_fraction * total_steps))
    frac = min(1.0, step / horizon)
    return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start)


def train_ddqn(agent, days, settings, cfg, train_cfg, explore_rng, update_rng, sim_rng,
               log_every=512, on_update=None):
    env = AutoscaleEnv(days, settings, sim_rng)
    n_episodes = train_cfg.passes * len(days)
    total_steps = sum(len(days[i % len(days)]) for i in range(n_episodes))
    buffer = ReplayBuffer(cfg.buffer)
    target = copy_params(agent.params)
    optimizer = Adam(agent.params, lr=cfg.lr)
    rows = []
    step = 0
    losses, rewards = [], []
    for ep in range(n_episodes):
        obs = env.reset(ep % len(days))
        done = False
        while not done:
            agent.epsilon = epsilon_at(step, total_steps, cfg)
            action, _ = agent.act(obs, explore_rng, explore=True)
            next_obs, rb, done, _ = env.step(action)
            buffer.add(obs, joint_index(action), rb.total, next_obs, done)
            rewards.append(rb.total)
            obs = next_obs
            step += 1
            if len(buffer) >= cfg.learning_starts:
                o, a, r, o2, d = buffer.sample(update_rng, cfg.batch)
                y = ddqn_targets(r, d, o2, agent.params, target, cfg.gamma)
                q = q_values(agent.params, o)
                q_sa = q[np.arange(len(a)), a]
                loss = T.mean(T.square(q_sa - y))
                optimizer.zero_grad()
                loss.backward()
                clip_grad_norm(agent.params, cfg.max_grad_norm)
                optimizer.step()
                losses.append(loss.item())
            if step % cfg.target_sync == 0:
                target = copy_params(agent.params)
            if step % log_every == 0 or step == total_steps:
                row = {"update_idx": len(rows), "lr": cfg.lr,
                       "loss": float(np.mean(losses)) if losses else 0.0,
                       "policy_loss": 0.0, "value_loss": float(np.mean(losses)) if losses else 0.0,
                       "entropy": 0.0, "approx_kl": 0.0, "clip_frac": 0.0,
                       "mean_reward": float(np.mean(rewards)) if rewards else 0.0,
                       "beta": 0.0, "steps": len(rewards), "epsilon": agent.epsilon}
                rows.append(row)
                losses, rewards = [], []
                if on_update is not None:
                    on_update(optimizer, row)
    agent.epsilon = 0.0
    return optimizer, rows


def evaluate(agent, days, settings, sim_rng, act_rng=None):
    """Greedy replay over ``days`` (one episode each); returns telemetry rows."""
    env = AutoscaleEnv(days, settings, sim_rng)
    act_rng = act_rng if act_rng is not None else np.random.default_rng(0)
    rows = []
    for day in range(len(days)):
        obs = env.reset(day)
        agent.begin_episode()
        done = False
        while not done:
            action, _ = agent.act(obs, act_rng, explore=False)
            obs, _, done, row = env.step(action)
            rows.append(row)
    return rows
