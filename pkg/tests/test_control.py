import dataclasses
import itertools
import math

import numpy as np
import pytest

from attnscale import control as K
from attnscale import simenv as S


def test_time_features():
    assert K.time_features(0) == (1.0, 0.0)
    c, s = K.time_features(360)
    assert abs(c) < 1e-15 and s == pytest.approx(1.0, abs=1e-15)


def test_minute_of_day_spans_one_cycle_per_500_steps():
    assert K.minute_of_day(0) == 0
    assert K.minute_of_day(125) == 360
    assert K.minute_of_day(500) == 0


def test_observation_latency_norm_and_length():
    cfg = S.ClusterConfig()
    st = dataclasses.replace(S.initial_state(cfg), last_latency=50.0)
    obs = K.build_observation(st, K.ForecastState(), 0, K.NormConfig())
    assert obs.shape == (14,)
    assert obs[0] == 0.5
    assert obs[11] ** 2 + obs[12] ** 2 == pytest.approx(1.0, abs=1e-9)


def test_observation_golden_vector():
    cfg = S.ClusterConfig()
    st = S.initial_state(cfg, replicas=4, hpa_target=70.0, multiplier=2.0, mode="MOD")
    st = dataclasses.replace(st, last_latency=30.0, last_success_ratio=0.9, admitted=120.0,
                             last_utilization=60.0, pod_ram=40.0, cluster_cpu_total=1.2,
                             cluster_ram_total=5.8)
    fc = K.ForecastState(window=(100.0,), n_hat=100.0)
    norms = K.NormConfig(rate_scale=400.0)
    obs = K.build_observation(st, fc, 125, norms)
    golden = [0.3, 0.9, 0.3, 0.02, 0.3, 0.2, 0.006, 0.029, 70 / 90, 2 / 3, 0.5,
              math.cos(math.pi / 2), 1.0, 0.25]
    np.testing.assert_allclose(obs, golden, rtol=0, atol=1e-15)


def test_non_finite_metric_is_an_error():
    st = dataclasses.replace(S.initial_state(S.ClusterConfig()), last_latency=float("nan"))
    with pytest.raises(K.ObservationError):
        K.build_observation(st, K.ForecastState(), 0, K.NormConfig())


def forecast_of(values):
    f = K.ForecastState()
    for v in values:
        f = K.update_forecast(f, v)
    return f


def test_forecast_examples():
    assert forecast_of([100, 100, 100]).n_hat == pytest.approx(100.0, abs=1e-12)
    assert forecast_of([80, 100, 120]).n_hat == pytest.approx(760 / 7, abs=1e-12)
    assert forecast_of([50]).n_hat == 50.0


def test_forecast_weights_sum_to_one():
    for n in (1, 2, 3):
        assert K.forecast_weights(n).sum() == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(K.forecast_weights(3), [4 / 7, 2 / 7, 1 / 7])


def test_forecast_constant_rate_exact_after_three():
    f = forecast_of([5, 900, 3, 42, 42, 42])
    assert f.n_hat == 42.0
    assert len(f.window) == 3


def test_decode_examples():
    d = K.decode_action((0, 1, 2, 1))
    assert (d.hpa_target, d.lr_flag, d.multiplier, d.mode) == (30, "base", 3.0, "MOD")
    d = K.decode_action((3, 0, 0, 0))
    assert (d.hpa_target, d.lr_flag, d.multiplier, d.mode) == (90, "decrease", 1.0, "OFF")
    with pytest.raises(K.DecodeError):
        K.decode_action((4, 0, 0, 0))


def test_decode_bijection():
    tuples = list(itertools.product(*(range(n) for n in K.HEAD_SIZES)))
    decoded = {K.decode_action(t) for t in tuples}
    assert len(tuples) == len(decoded) == 108
    for t in tuples:
        assert K.encode_action(K.decode_action(t)).as_tuple() == t
