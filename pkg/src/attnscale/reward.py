"""Five-term SLO-aware reward."""

import logging
import math
from dataclasses import dataclass, asdict

log = logging.getLogger(__name__)

SUCCESS_EPS = 1e-6


@dataclass(frozen=True)
class RewardWeights:
    w_sla: float = 0.50
    w_cpu: float = 0.25
    w_succ: float = 0.12
    w_stab: float = 0.08
    w_fcst: float = 0.05

    def __post_init__(self):
        if min(asdict(self).values()) < 0:
            raise ValueError("reward weights must be nonnegative")


@dataclass(frozen=True)
class SloThresholds:
    target: float = 20.0
    thresh: float = 50.0

    def __post_init__(self):
        if not 0 < self.target < self.thresh:
            raise ValueError("need 0 < target < thresh")


@dataclass(frozen=True)
class RewardBreakdown:
    r_slo: float
    r_cpu: float
    r_stab: float
    r_fcst: float
    r_succ: float
    total: float


def r_slo(latency_ms, th=SloThresholds()):
    if latency_ms < 0:
        raise ValueError("latency must be nonnegative")
    if latency_ms <= th.target:
        return 1.0
    if latency_ms <= th.thresh:
        return 0.5 + 0.5 * (th.thresh - latency_ms) / (th.thresh - th.target)
    return max(-1.0, -0.5 * (latency_ms - th.thresh) / 0.1)


def r_cpu(utilization, target):
    dev = utilization - target
    if abs(dev) <= 10.0:
        return 1.0
    return math.exp(-((dev / 50.0) ** 2))


def r_stab(delta):
    mag = abs(delta)
    return -0.1 * mag if mag <= 2 else -0.5 * mag


def r_fcst(replicas, capacity, n_hat):
    """Squared relative gap between provisioned capacity and forecast demand.

    Zero when there is no forecast demand.
    """
    if n_hat <= 0:
        log.debug("r_fcst: no forecast demand, term set to 0")
        return 0.0
    return -(((replicas * capacity - n_hat) / n_hat) ** 2)


def r_succ(sr):
    if not 0.0 <= sr <= 1.0:
        raise ValueError("success ratio must be within [0, 1]")
    if sr >= 0.99:
        return 1.0
    if sr == 0.0:
        log.debug("r_succ: zero success ratio clamped to log(%g)", SUCCESS_EPS)
        return math.log(SUCCESS_EPS)
    return math.log(sr)


def total(components, weights=RewardWeights()):
    """Weighted sum; ``components`` is (r_slo, r_cpu, r_stab, r_fcst, r_succ)."""
    slo, cpu, stab, fcst, succ = components
    value = (weights.w_sla * slo + weights.w_cpu * cpu + weights.w_stab * stab
             + weights.w_fcst * fcst + weights.w_succ * succ)
    return RewardBreakdown(slo, cpu, stab, fcst, succ, value)


def compute(latency_ms, utilization, target, delta, replicas, capacity, n_hat, sr,
            weights=RewardWeights(), th=SloThresholds()):
    return total((r_slo(latency_ms, th), r_cpu(utilization, target), r_stab(delta),
                  r_fcst(replicas, capacity, n_hat), r_succ(sr)), weights)
