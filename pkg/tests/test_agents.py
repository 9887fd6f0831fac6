import itertools

import numpy as np
import pytest
from scipy import stats

from attnscale import agents as A
from attnscale import control as K
from attnscale.neural import Carry, PolicyArch, Tensor, UsageError
from attnscale.neural.distributions import sample_multidiscrete

ALL_TUPLES = list(itertools.product(*(range(n) for n in K.HEAD_SIZES)))


def test_joint_index_examples():
    assert A.joint_index((0, 0, 0, 0)) == 0
    assert A.joint_index((3, 2, 2, 2)) == 107
    assert A.joint_index((1, 0, 2, 1)) == 34


def test_joint_index_bijection():
    seen = {A.joint_index(t) for t in ALL_TUPLES}
    assert seen == set(range(108))
    for t in ALL_TUPLES:
        assert A.from_joint_index(A.joint_index(t)).as_tuple() == t
    for bad in (-1, 108):
        with pytest.raises(K.DecodeError):
            A.from_joint_index(bad)


def q_net_with_bias(bias):
    """Zero weights so Q(s, .) equals the output bias for every state."""
    params = A.init_q_network(np.random.default_rng(0))
    for k, p in params.items():
        p.data[...] = 0.0
    params["q2.b"].data[:] = bias
    return params


def test_ddqn_target_arithmetic():
    online_bias = np.zeros(108)
    online_bias[17] = 5.0  # online argmax a* = 17
    target_bias = np.full(108, 9.0)
    target_bias[17] = 2.0  # target value at a*, deliberately not the target's max
    online, target = q_net_with_bias(online_bias), q_net_with_bias(target_bias)
    s2 = np.ones(14)
    assert A.ddqn_target(1.0, False, s2, online, target, 0.99) == pytest.approx(2.98, abs=1e-12)
    assert A.ddqn_target(1.0, True, s2, online, target, 0.99) == 1.0
    with pytest.raises(ValueError):
        A.ddqn_target(1.0, False, s2, online, target, 1.0)


def test_ddqn_degenerates_to_dqn_when_networks_match():
    rng = np.random.default_rng(1)
    net = A.init_q_network(rng)
    s2 = rng.normal(size=(32, 14))
    r = rng.normal(size=32)
    d = rng.random(32) < 0.2
    y = A.ddqn_targets(r, d, s2, net, net, 0.9)
    dqn = r + 0.9 * (1 - d) * A.q_values_np(net, s2).max(axis=1)
    assert np.array_equal(y, dqn)
    for i in range(5):
        assert A.ddqn_target(r[i], d[i], s2[i], net, net, 0.9) == pytest.approx(y[i], abs=1e-12)


def test_epsilon_one_is_uniform_over_joint_actions():
    agent = A.DDQNAgent(rng=np.random.default_rng(2), epsilon=1.0)
    rng = np.random.default_rng(3)
    obs = np.zeros(14)
    counts = np.zeros(108)
    for _ in range(100_000):
        _, aux = agent.act(obs, rng)
        counts[aux["joint"]] += 1
    assert stats.chisquare(counts).pvalue > 0.01


def test_ddqn_greedy_deterministic():
    agent = A.DDQNAgent(rng=np.random.default_rng(4), epsilon=0.0)
    obs = np.random.default_rng(5).normal(size=14)
    picks = {agent.act(obs, np.random.default_rng(s))[0] for s in range(10)}
    assert len(picks) == 1


def test_static_action():
    agent = A.StaticHPAAgent()
    for obs in (np.zeros(14), np.ones(14)):
        a, aux = agent.act(obs, None)
        assert a.as_tuple() == (1, 1, 0, 0) and aux == {}
        d = agent.decode(a)
        assert (d.hpa_target, d.lr_flag, d.multiplier, d.mode) == (50, "base", 1.0, "OFF")


def test_ppo_greedy_is_per_head_argmax():
    logits = [np.array([5.0, 0, 0, 0]), np.array([0, 5.0, 0]), np.array([0, 0, 5.0]),
              np.array([5.0, 0, 0])]
    acts, _, _ = sample_multidiscrete(logits, None, greedy=True)
    assert acts == (0, 1, 2, 0)
    agent = A.PPOAgent("SINGLE_LSTM_PPO", arch=PolicyArch(hidden=4).single_lstm(),
                       rng=np.random.default_rng(6))
    a, aux = agent.act(np.zeros(14), None, explore=False)
    assert a.as_tuple() == tuple(int(np.argmax(x)) for x in aux["logits"])


def all_agents():
    rng = np.random.default_rng(7)
    return [A.PPOAgent("ATTN_DOUBLE_LSTM_PPO", arch=PolicyArch(hidden=4), rng=rng),
            A.PPOAgent("SINGLE_LSTM_PPO", arch=PolicyArch(hidden=4).single_lstm(), rng=rng),
            A.DDQNAgent(rng=rng), A.StaticHPAAgent()]


def test_decode_pipeline_is_shared():
    agents = all_agents()
    for t in ALL_TUPLES:
        a = K.ActionVector(*t)
        decoded = {ag.decode(a) for ag in agents}
        assert decoded == {K.decode_action(a)}


def test_state_kind_mismatch_is_usage_error():
    ppo, single, ddqn, static = all_agents()
    obs = np.zeros(14)
    with pytest.raises(UsageError):
        ppo.act(obs, None, explore=False, state="not a carry")
    with pytest.raises(UsageError):
        ddqn.act(obs, None, explore=False, state=Carry.zeros(ppo.arch))
    with pytest.raises(UsageError):
        static.act(obs, None, state=Carry.zeros(ppo.arch))


def test_explicit_state_does_not_touch_internal_carry():
    agent = all_agents()[0]
    before = agent.carry.copy()
    agent.act(np.ones(14), np.random.default_rng(0), state=Carry.zeros(agent.arch))
    assert np.array_equal(agent.carry.h, before.h)


def test_replay_buffer_fifo():
    buf = A.ReplayBuffer(capacity=3, obs_dim=2)
    for i in range(5):
        buf.add(np.full(2, i), i, float(i), np.full(2, i + 1), False)
    assert len(buf) == 3
    assert sorted(buf.actions.tolist()) == [2, 3, 4]
    o, a, r, _, _ = buf.sample(np.random.default_rng(0), 50)
    assert set(a.tolist()) <= {2, 3, 4}
    assert np.array_equal(o[:, 0], r)


def test_q_network_shape():
    q = A.q_values(A.init_q_network(np.random.default_rng(0)), np.zeros((5, 14)))
    assert isinstance(q, Tensor) and q.shape == (5, 108)
