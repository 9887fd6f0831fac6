import math

import numpy as np
import pytest

from attnscale import reward as R


@pytest.mark.parametrize("lat,expected", [(0, 1.0), (20, 1.0), (35, 0.75), (50, 0.5),
                                          (50.05, -0.25), (51, -1.0), (500, -1.0)])
def test_r_slo(lat, expected):
    assert R.r_slo(lat) == pytest.approx(expected, abs=1e-12)


def test_r_slo_negative_latency():
    with pytest.raises(ValueError):
        R.r_slo(-1)


def test_r_slo_monotone():
    grid = np.linspace(0, 120, 12001)
    vals = [R.r_slo(x) for x in grid]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_r_cpu():
    assert R.r_cpu(50, 50) == 1.0
    assert R.r_cpu(40, 50) == 1.0
    assert R.r_cpu(100, 50) == pytest.approx(math.exp(-1), abs=1e-12)
    assert R.r_cpu(60.5, 50) < 1.0


def test_r_stab():
    assert R.r_stab(0) == 0
    assert R.r_stab(2) == pytest.approx(-0.2)
    assert R.r_stab(5) == -2.5
    assert R.r_stab(-5) == R.r_stab(5)


def test_r_fcst():
    assert R.r_fcst(2, 50, 100) == 0
    assert R.r_fcst(2, 50, 50) == -1.0
    assert R.r_fcst(1, 50, 100) == -0.25
    assert R.r_fcst(3, 50, 0) == 0.0


def test_r_succ():
    assert R.r_succ(0.995) == 1.0
    assert R.r_succ(1.0) == 1.0
    assert R.r_succ(math.exp(-1)) == pytest.approx(-1.0, abs=1e-15)
    assert R.r_succ(0.0) == pytest.approx(-13.815510557964274)
    with pytest.raises(ValueError):
        R.r_succ(1.5)


def test_total_examples():
    assert R.total((1, 1, 0, 0, 1)).total == pytest.approx(0.87, abs=1e-12)
    assert R.total((0, 0, 0, 0, 0)).total == 0
    assert R.total((1, 1, -0.2, -0.25, 1)).total == pytest.approx(0.8415, abs=1e-12)


def test_total_is_linear_with_table_weights():
    w = R.RewardWeights()
    base = np.array([0.3, 0.6, -0.4, -0.7, 0.9])
    coeff = [w.w_sla, w.w_cpu, w.w_stab, w.w_fcst, w.w_succ]
    for i, c in enumerate(coeff):
        bumped = base.copy()
        bumped[i] += 1.0
        slope = R.total(tuple(bumped)).total - R.total(tuple(base)).total
        assert slope == pytest.approx(c, abs=1e-12)


def test_invalid_weights_and_thresholds():
    with pytest.raises(ValueError):
        R.RewardWeights(w_sla=-1)
    with pytest.raises(ValueError):
        R.SloThresholds(target=60, thresh=50)
