"""Observation building, short-horizon forecasting and action decoding."""

import math
from dataclasses import dataclass, asdict

import numpy as np

from .simenv import HPA_TARGETS, MULTIPLIERS, MODES

OBS_DIM = 14
HEAD_SIZES = (4, 3, 3, 3)
LR_FLAGS = ("decrease", "base", "increase")
MINUTES_PER_DAY = 1440

OBS_FIELDS = (
    "latency", "success_ratio", "admitted_rate",
    "replicas", "pod_cpu", "pod_ram", "cluster_cpu", "cluster_ram",
    "hpa_target", "multiplier", "enhancement",
    "time_cos", "time_sin",
    "forecast",
)


class DecodeError(ValueError):
    pass


class ObservationError(ValueError):
    pass


@dataclass(frozen=True)
class NormConfig:
    latency_scale: float = 100.0
    rate_scale: float = 1000.0  # 2 x peak per-step demand of the training days
    max_replicas: int = 200
    cpu_scale: float = 200.0
    ram_scale: float = 200.0
    target_scale: float = 90.0
    multiplier_scale: float = 3.0
    mode_scale: float = 2.0
    steps_per_day: int = 500

    @classmethod
    def for_trace(cls, trace, max_replicas=200, **kw):
        from .trace import TRAIN
        peak = max(1, trace.peak(TRAIN) if trace.day_indices(TRAIN) else trace.peak())
        return cls(rate_scale=2.0 * peak, max_replicas=max_replicas,
                   steps_per_day=trace.steps_per_day, **kw)

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class ActionVector:
    a_targ: int
    a_lr: int
    a_mult: int
    a_enh: int

    def __post_init__(self):
        for name, value, n in zip(("a_targ", "a_lr", "a_mult", "a_enh"),
                                  (self.a_targ, self.a_lr, self.a_mult, self.a_enh),
                                  HEAD_SIZES):
            if not isinstance(value, (int, np.integer)) or not 0 <= value < n:
                raise DecodeError(f"{name}={value!r} outside [0, {n})")

    def as_tuple(self):
        return (int(self.a_targ), int(self.a_lr), int(self.a_mult), int(self.a_enh))


@dataclass(frozen=True)
class DecodedAction:
    hpa_target: int
    lr_flag: str
    multiplier: float
    mode: str


def decode_action(a):
    """Map action indices onto cluster configuration values."""
    if not isinstance(a, ActionVector):
        a = ActionVector(*a)
    return DecodedAction(HPA_TARGETS[a.a_targ], LR_FLAGS[a.a_lr],
                         MULTIPLIERS[a.a_mult], MODES[a.a_enh])


def encode_action(decoded):
    """Inverse of :func:`decode_action`."""
    try:
        return ActionVector(HPA_TARGETS.index(decoded.hpa_target), LR_FLAGS.index(decoded.lr_flag),
                            MULTIPLIERS.index(decoded.multiplier), MODES.index(decoded.mode))
    except ValueError as exc:
        raise DecodeError(str(exc)) from None


@dataclass(frozen=True)
class ForecastState:
    """Newest-first window of recent admitted rates and its smoothed value."""

    window: tuple = ()
    n_hat: float = 0.0
    size: int = 3
    alpha: float = 0.5


def forecast_weights(n, alpha=0.5):
    w = (1.0 - alpha) ** np.arange(n)
    return w / w.sum()


def update_forecast(forecast, admitted):
    """Push one admitted rate and recompute the exponentially weighted mean."""
    if admitted < 0:
        raise ValueError("admitted rate must be nonnegative")
    window = ((float(admitted),) + forecast.window)[:forecast.size]
    w = forecast_weights(len(window), forecast.alpha)
    n_hat = float(np.dot(w, window))
    return ForecastState(window, n_hat, forecast.size, forecast.alpha)


def minute_of_day(t, steps_per_day=500):
    return (t % steps_per_day) * (MINUTES_PER_DAY / steps_per_day)


def time_features(minute):
    angle = 2.0 * math.pi * minute / MINUTES_PER_DAY
    return math.cos(angle), math.sin(angle)


def build_observation(state, forecast, t, norms, outcome=None):
    """The 14-entry state vector: perf, resources, config, time, forecast.

    Metrics are taken from ``state`` (which carries the last step's
    measurements); ``outcome`` is accepted for symmetry and, when given,
    overrides latency, success ratio and admitted rate.
    """
    lat = state.last_latency if outcome is None else outcome.avg_latency
    sr = state.last_success_ratio if outcome is None else outcome.success_ratio
    lam = state.admitted if outcome is None else outcome.admitted
    cos_t, sin_t = time_features(minute_of_day(t, norms.steps_per_day))
    raw = [
        lat / norms.latency_scale,
        sr,
        lam / norms.rate_scale,
        state.replicas_total / norms.max_replicas,
        state.last_utilization / norms.cpu_scale,
        state.pod_ram / norms.ram_scale,
        state.cluster_cpu_total / norms.cpu_scale,
        state.cluster_ram_total / norms.ram_scale,
        state.hpa_target / norms.target_scale,
        state.multiplier / norms.multiplier_scale,
        MODES.index(state.mode) / norms.mode_scale,
        cos_t,
        sin_t,
        forecast.n_hat / norms.rate_scale,
    ]
    obs = np.array(raw, dtype=np.float64)
    if not np.all(np.isfinite(obs)):
        bad = [OBS_FIELDS[i] for i in np.flatnonzero(~np.isfinite(obs))]
        raise ObservationError(f"non-finite observation entries: {bad}")
    return obs
