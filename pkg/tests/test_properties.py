"""Randomized invariants checked with hypothesis."""

import numpy as np
from hypothesis import given, settings, strategies as st

from attnscale import reward as R
from attnscale import simenv as S
from attnscale import telemetry as M
from attnscale import training as TR
from attnscale.agents import from_joint_index, joint_index

floats = st.floats(-1e3, 1e3, allow_nan=False)
latencies = st.lists(st.floats(0, 500, allow_nan=False), min_size=1, max_size=60)
replica_runs = st.lists(st.integers(1, 200), min_size=1, max_size=80)


@given(st.lists(floats, min_size=1, max_size=50), st.lists(floats, min_size=1, max_size=20))
def test_cdf_monotone_and_bounded(xs, grid):
    grid = np.sort(grid)
    c = M.cdf(xs, grid)
    assert np.all(np.diff(c) >= 0)
    assert np.all((c >= 0) & (c <= 1))
    assert M.cdf(xs, [max(xs)])[0] == 1.0


@given(replica_runs, st.integers(-50, 50))
def test_churn_shift_invariant_and_reversible(reps, shift):
    assert M.churn(reps) == M.churn([r + shift for r in reps])
    assert M.churn(reps) == M.churn(reps[::-1])


@given(st.lists(floats, min_size=1, max_size=60), st.integers(1, 100))
def test_percentile_is_a_sample_within_range(xs, p):
    v = M.percentile(xs, p)
    assert v in xs
    assert min(xs) <= v <= max(xs)


@given(latencies)
def test_hard_compliance_dominates_target(lat):
    rows = [{"latency": l, "p90": l, "offered": 10, "shed": 0, "dropped": 0, "replicas": 2,
             "u_cpu": 40.0, "SR": 1.0, "forecast_error": 0.0, "reward": 0.0} for l in lat]
    s = M.summarize(rows)
    assert s.hard_slo_compliance >= s.target_slo_compliance


@given(st.floats(0, 200, allow_nan=False), st.floats(0, 200, allow_nan=False))
def test_r_slo_monotone(a, b):
    lo, hi = sorted((a, b))
    assert R.r_slo(lo) >= R.r_slo(hi)
    assert -1.0 <= R.r_slo(hi) <= 1.0


@given(st.floats(0, 300, allow_nan=False), st.sampled_from(S.HPA_TARGETS))
def test_r_cpu_bounded(u, target):
    assert 0.0 < R.r_cpu(u, target) <= 1.0


@given(st.tuples(st.integers(0, 3), st.integers(0, 2), st.integers(0, 2), st.integers(0, 2)))
def test_joint_index_round_trip(t):
    assert from_joint_index(joint_index(t)).as_tuple() == t


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.lists(st.integers(0, 3000), min_size=1, max_size=60))
def test_simulator_mass_balance(seed, demand):
    rng = np.random.default_rng(seed)
    cfg = S.ClusterConfig()
    state = S.initial_state(cfg)
    for offered in demand:
        state = state.with_control(rng.choice(S.HPA_TARGETS), rng.choice(S.MULTIPLIERS),
                                   rng.choice(S.MODES))
        state, out = S.step(state, cfg, offered, rng)
        assert out.served + out.shed + out.dropped == out.offered == offered
        assert cfg.min_replicas <= state.replicas_total <= cfg.max_replicas


@given(st.lists(st.tuples(floats, floats, st.booleans()), min_size=1, max_size=16),
       st.floats(0, 0.999), st.floats(0, 1), floats)
def test_gae_recursive_equals_explicit(steps, gamma, lam, boot):
    r = np.array([s[0] for s in steps])
    v = np.array([s[1] for s in steps] + [boot])
    d = np.array([s[2] for s in steps])
    adv, ret = TR.compute_gae(r, v, d, gamma, lam)
    ref = TR.gae_explicit(r, v, d, gamma, lam)
    assert np.allclose(adv, ref, rtol=1e-12, atol=1e-9)
    assert np.allclose(ret - adv, v[:-1], atol=1e-9)
