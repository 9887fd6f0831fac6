import dataclasses
import math
import warnings

import numpy as np
import pytest

from attnscale import training as TR
from attnscale.agents import PPOAgent
from attnscale.env import EnvSettings
from attnscale.neural import PolicyArch
from attnscale.neural.distributions import joint_log_prob
from attnscale.neural.policy import forward, sample_dropout_masks
from attnscale.neural import tensor as T

SMALL = PolicyArch(hidden=4)


def test_gae_hand_example():
    adv, ret = TR.compute_gae([1, 1], [0.5, 0.5, 0.0], [False, False], 1.0, 1.0)
    np.testing.assert_allclose(adv, [1.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(ret, [2.0, 1.0], atol=1e-15)


def test_gae_degenerate_cases():
    adv, _ = TR.compute_gae(np.zeros(5), np.zeros(6), np.zeros(5), 0.99, 0.93)
    assert np.all(adv == 0)
    r = np.array([0.3, -1.0, 2.0])
    v = np.array([0.1, 0.4, -0.2, 9.0])
    adv, _ = TR.compute_gae(r, v, [0, 0, 0], 0.0, 0.93)
    assert np.array_equal(adv, r - v[:3])


def test_gae_shape_error():
    with pytest.raises(ValueError):
        TR.compute_gae([1, 1], [0, 0], [0, 0], 0.99, 0.9)


def explicit_oracle(r, v, d, gamma, lam):
    """sum_l (gamma*lam)^l delta_{t+l}, truncated at the first done."""
    n = len(r)
    delta = [r[t] + gamma * v[t + 1] * (1 - d[t]) - v[t] for t in range(n)]
    out = []
    for t in range(n):
        acc = 0.0
        for l in range(n - t):
            acc += (gamma * lam) ** l * delta[t + l]
            if d[t + l]:
                break
        out.append(acc)
    return np.array(out)


def test_gae_matches_double_sum():
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(300):
        n = int(rng.integers(1, 17))
        r = rng.normal(size=n)
        v = rng.normal(size=n + 1)
        d = rng.random(n) < 0.2
        g, lam = rng.uniform(0, 0.999), rng.uniform(0, 1)
        adv, _ = TR.compute_gae(r, v, d, g, lam)
        worst = max(worst, np.max(np.abs(adv - explicit_oracle(r, v, d, g, lam))),
                    np.max(np.abs(adv - TR.gae_explicit(r, v, d, g, lam))))
    assert worst < 1e-12


def test_lr_schedule():
    assert TR.lr_at(0, 100) == 2e-4
    assert TR.lr_at(50, 100) == pytest.approx(1e-4, abs=1e-12)
    assert TR.lr_at(100, 100) == pytest.approx(0.0, abs=1e-20)
    with pytest.warns(UserWarning):
        assert TR.lr_at(101, 100) == 0.0
    with pytest.raises(ValueError):
        TR.lr_at(-1, 100)


def test_adapt_kl_beta():
    assert TR.adapt_kl_beta(0.01, 0.01, 0.01) == 0.01
    assert TR.adapt_kl_beta(0.01, 0.03, 0.01) == 0.02
    assert TR.adapt_kl_beta(0.01, 0.0025, 0.01) == 0.005
    with pytest.raises(ValueError):
        TR.adapt_kl_beta(0.0, 1.0, 0.01)


def test_advantage_normalization():
    rng = np.random.default_rng(1)
    x = rng.normal(3, 7, size=(8, 16))
    mask = rng.random((8, 16)) < 0.7
    z = TR.normalize(x, mask)
    assert abs(z[mask].mean()) < 1e-10
    assert abs(z[mask].std() - 1) < 1e-6
    assert np.all(z[~mask] == 0)


def rollout(agent, n, seed=0, done_at=()):
    rng = np.random.default_rng(seed)
    buf = TR.RolloutBuffer(512)
    agent.begin_episode()
    first = True
    for t in range(n):
        obs = rng.uniform(0, 1, size=14)
        carry = agent.carry
        a, aux = agent.act(obs, rng)
        done = t in done_at
        buf.add(obs, a, aux["log_prob"], aux["value"], rng.normal(), done, first, carry)
        first = done
        if done:
            agent.begin_episode()
    return buf


def anchored_batch(agent, cfg, seed=0, n=40):
    buf = rollout(agent, n, seed, done_at=(17,))
    adv, ret = TR.compute_gae(buf.rewards, np.array(buf.values + [0.0]), buf.dones,
                              cfg.gamma, cfg.gae_lambda)
    batch = TR.build_sequences(buf, adv, ret, cfg.seq_len)
    batch.masks = sample_dropout_masks(agent.arch, np.random.default_rng(seed),
                                       batch.obs.shape[0], cfg.seq_len)
    return TR.anchor_policy(batch, agent.params, agent.arch)


def test_first_minibatch_identities():
    agent = PPOAgent("ATTN_DOUBLE_LSTM_PPO", arch=SMALL, rng=np.random.default_rng(2))
    cfg = TR.PpoConfig(epochs=2, minibatch=32)
    trainer = TR.PpoTrainer(agent, cfg, np.random.default_rng(3))
    buf = rollout(agent, 100, 4, done_at=(49,))
    trainer.update(buf, 0.0, 1e-3)
    d = trainer.first_minibatch_diag
    assert d["ratio_min"] == 1.0 and d["ratio_max"] == 1.0
    assert d["approx_kl"] == 0.0 and d["clip_frac"] == 0.0


def test_first_minibatch_surrogate_is_negative_mean_advantage():
    agent = PPOAgent("SINGLE_LSTM_PPO", arch=SMALL.single_lstm(), rng=np.random.default_rng(5))
    cfg = TR.PpoConfig(normalize_advantages=False)
    batch = anchored_batch(agent, cfg)
    _, diag = TR.ppo_loss(batch, agent.params, agent.arch, cfg, 0.01)
    expected = -batch.advantages[batch.valid].mean()
    assert diag["policy_loss"] == pytest.approx(expected, abs=1e-12)


def single_step_batch(agent, cfg, ratio, advantage):
    batch = anchored_batch(agent, cfg, n=1)
    batch.advantages[:] = advantage
    batch.old_log_prob = batch.old_log_prob - math.log(ratio)
    return batch


@pytest.mark.parametrize("ratio,adv,expected", [(1.5, 1.0, 1.2), (0.5, -1.0, -0.8),
                                                (1.1, 1.0, 1.1), (0.7, 1.0, 0.7)])
def test_clipped_surrogate_arithmetic(ratio, adv, expected):
    agent = PPOAgent("SINGLE_LSTM_PPO", arch=SMALL.single_lstm(), rng=np.random.default_rng(6))
    cfg = TR.PpoConfig(normalize_advantages=False)
    batch = single_step_batch(agent, cfg, ratio, adv)
    _, diag = TR.ppo_loss(batch, agent.params, agent.arch, cfg, 0.0)
    assert diag["policy_loss"] == pytest.approx(-expected, abs=1e-12)
    assert diag["ratio_max"] == pytest.approx(ratio, abs=1e-12)


def test_entropy_coefficient_sign():
    agent = PPOAgent("ATTN_DOUBLE_LSTM_PPO", arch=SMALL, rng=np.random.default_rng(7))
    base = TR.PpoConfig()
    batch = anchored_batch(agent, base)
    losses = []
    for c in (0.0, 0.01, 0.1, 1.0):
        cfg = dataclasses.replace(base, ent_coef=c)
        loss, diag = TR.ppo_loss(batch, agent.params, agent.arch, cfg, 0.01)
        losses.append((c, loss.item(), diag["entropy"]))
    ent = losses[0][2]
    assert ent > 0
    for (c0, l0, _), (c1, l1, _) in zip(losses, losses[1:]):
        assert l1 <= l0
        assert l1 - l0 == pytest.approx(-(c1 - c0) * ent, abs=1e-12)


def test_anchor_matches_fresh_forward():
    agent = PPOAgent("ATTN_DOUBLE_LSTM_PPO", arch=SMALL, rng=np.random.default_rng(8))
    batch = anchored_batch(agent, TR.PpoConfig())
    with T.no_grad():
        out = forward(agent.params, agent.arch, batch.obs, batch.carry, batch.resets, batch.masks)
        lp, _ = joint_log_prob(out.logits, batch.actions)
    assert np.array_equal(lp.data, batch.old_log_prob)


def five_days(seed=0):
    rng = np.random.default_rng(seed)
    return [rng.integers(50, 300, size=500) for _ in range(5)]


def test_2500_steps_give_four_updates_plus_partial():
    agent = PPOAgent("SINGLE_LSTM_PPO", arch=SMALL.single_lstm(), rng=np.random.default_rng(9))
    cfg = TR.PpoConfig(epochs=1)
    rngs = [np.random.default_rng(i) for i in (10, 11, 12)]
    _, rows = TR.train_ppo(agent, five_days(), EnvSettings(), cfg, TR.TrainConfig(), *rngs)
    assert [r["steps"] for r in rows] == [512, 512, 512, 512, 452]
    assert sum(r["steps"] for r in rows) == 2500
    assert rows[0]["lr"] == 2e-4
    assert all(a["lr"] > b["lr"] for a, b in zip(rows, rows[1:]))


def test_zero_epochs_leave_parameters_unchanged():
    agent = PPOAgent("SINGLE_LSTM_PPO", arch=SMALL.single_lstm(), rng=np.random.default_rng(13))
    before = {k: v.data.copy() for k, v in agent.params.items()}
    cfg = TR.PpoConfig(epochs=0)
    rngs = [np.random.default_rng(i) for i in (14, 15, 16)]
    TR.train_ppo(agent, five_days()[:2], EnvSettings(), cfg, TR.TrainConfig(), *rngs)
    for k, v in agent.params.items():
        assert np.array_equal(v.data, before[k]), k


def test_training_is_deterministic():
    def run():
        agent = PPOAgent("ATTN_DOUBLE_LSTM_PPO", arch=SMALL, rng=np.random.default_rng(17))
        rngs = [np.random.default_rng(i) for i in (18, 19, 20)]
        _, rows = TR.train_ppo(agent, five_days()[:2], EnvSettings(), TR.PpoConfig(epochs=2),
                               TR.TrainConfig(), *rngs)
        return {k: v.data.tobytes() for k, v in agent.params.items()}, rows
    a, b = run(), run()
    assert a == b


def test_divergence_guard():
    agent = PPOAgent("SINGLE_LSTM_PPO", arch=SMALL.single_lstm(), rng=np.random.default_rng(21))
    trainer = TR.PpoTrainer(agent, TR.PpoConfig(epochs=1), np.random.default_rng(22))
    buf = rollout(agent, 20)
    buf.rewards[3] = float("nan")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        with pytest.raises(TR.TrainingDiverged):
            trainer.update(buf, 0.0, 1e-4)


def test_ddqn_epsilon_schedule():
    cfg = TR.DdqnConfig()
    assert TR.epsilon_at(0, 1000, cfg) == 1.0
    assert TR.epsilon_at(400, 1000, cfg) == pytest.approx(0.05)
    assert TR.epsilon_at(999, 1000, cfg) == pytest.approx(0.05)
    assert TR.epsilon_at(200, 1000, cfg) == pytest.approx(0.525)
