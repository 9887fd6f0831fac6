"""Discrete-time serverless cluster simulator.

One call to :func:`step` covers one control interval: pending replicas finish
starting, the gateway admits up to ``multiplier * gateway_base_rate``
requests, ready replicas serve up to ``overload_serve_factor`` times their
nominal capacity, latency follows a saturating queueing curve, and the
internal HPA (plus the active enhancement mode) sets the replica count for
the next interval.
"""

import csv
import math
from dataclasses import dataclass, replace, asdict

MODES = ("OFF", "MOD", "AGGR")
HPA_TARGETS = (30, 50, 70, 90)
MULTIPLIERS = (1.0, 2.0, 3.0)
P90_Z = 1.2816


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ClusterConfig:
    capacity_per_replica: float = 50.0
    max_replicas: int = 200
    min_replicas: int = 1
    base_latency: float = 12.0
    queue_latency: float = 8.0
    max_busy: float = 0.95
    overload_serve_factor: float = 1.5
    cold_start_steps: int = 1
    gateway_base_rate: float = 500.0
    p90_sigma: float = 0.3
    p90_jitter: float = 0.05
    hpa_tolerance: float = 0.1
    hpa_down_window: int = 1
    latency_threshold: float = 50.0
    scale_down_cap: float = 0.3
    # RAM model: pod percent = ram_base + ram_per_request * load per replica
    ram_base: float = 20.0
    ram_per_request: float = 0.3
    node_ram_overhead: float = 5.0

    def __post_init__(self):
        if self.capacity_per_replica <= 0:
            raise ConfigError("capacity_per_replica must be positive")
        if not self.max_replicas >= self.min_replicas >= 1:
            raise ConfigError("need max_replicas >= min_replicas >= 1")
        if self.overload_serve_factor < 1:
            raise ConfigError("overload_serve_factor must be >= 1")
        if self.base_latency <= 0 or self.queue_latency <= 0:
            raise ConfigError("latencies must be positive")
        if not 0 < self.max_busy < 1:
            raise ConfigError("max_busy must be in (0, 1)")
        if self.cold_start_steps < 0 or self.hpa_down_window < 1:
            raise ConfigError("cold_start_steps >= 0 and hpa_down_window >= 1 required")
        if self.gateway_base_rate <= 0:
            raise ConfigError("gateway_base_rate must be positive")


@dataclass(frozen=True)
class ClusterState:
    replicas_ready: int = 1
    pending: tuple = ()  # remaining startup steps, one entry per pending replica
    hpa_target: float = 50.0
    multiplier: float = 1.0
    mode: str = "OFF"
    last_utilization: float = 0.0
    last_latency: float = 12.0
    last_p90: float = 12.0
    last_success_ratio: float = 1.0
    admitted: float = 0.0
    cluster_cpu_total: float = 0.0
    cluster_ram_total: float = 0.0
    pod_ram: float = 20.0
    recommendations: tuple = ()  # recent HPA recommendations, newest last

    @property
    def replicas_total(self):
        return self.replicas_ready + len(self.pending)

    def validate(self, config):
        if not config.min_replicas <= self.replicas_total <= config.max_replicas:
            raise ConfigError(f"replica count {self.replicas_total} outside bounds")
        if self.replicas_ready < 1 and self.replicas_total < config.min_replicas:
            raise ConfigError("no replicas")
        if not 0.0 <= self.last_success_ratio <= 1.0:
            raise ConfigError("success ratio outside [0, 1]")
        if self.last_utilization < 0:
            raise ConfigError("negative utilization")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.hpa_target <= 0:
            raise ConfigError("HPA target must be positive")
        return self

    def with_control(self, hpa_target, multiplier, mode):
        return replace(self, hpa_target=float(hpa_target), multiplier=float(multiplier),
                       mode=mode)


def initial_state(config, replicas=None, **control):
    n = config.min_replicas if replicas is None else replicas
    return ClusterState(replicas_ready=n, last_latency=config.base_latency,
                        last_p90=config.base_latency, pod_ram=config.ram_base,
                        **control).validate(config)


@dataclass(frozen=True)
class StepOutcome:
    offered: int
    admitted: int
    served: int
    shed: int
    dropped: int
    avg_latency: float
    p90_latency: float
    success_ratio: float
    replica_delta: int
    utilization: float
    replicas_ready: int
    replicas_pending: int


def latency(utilization, config):
    """Average latency (ms) for a CPU utilization in percent."""
    b = min(max(utilization, 0.0) / 100.0, config.max_busy)
    return config.base_latency + config.queue_latency * b / (1.0 - b)


def hpa_recommend(replicas, utilization, target, config, history=()):
    """Desired replica count from the standard HPA ratio rule.

    Within the tolerance band the current count is kept. Scale-down
    recommendations are stabilized by taking the maximum over the last
    ``hpa_down_window`` recommendations (``history`` holds the previous ones,
    newest last). Returns ``(desired, raw_recommendation)``.
    """
    if target <= 0:
        raise ConfigError("HPA target must be positive")
    if replicas < 1:
        raise ConfigError("HPA needs at least one replica")
    ratio = utilization / target
    if abs(ratio - 1.0) <= config.hpa_tolerance:
        raw = replicas
    else:
        raw = math.ceil(replicas * ratio - 1e-9)
    raw = min(max(raw, config.min_replicas), config.max_replicas)
    desired = raw
    if raw < replicas and config.hpa_down_window > 1:
        window = list(history)[-(config.hpa_down_window - 1):] + [raw]
        desired = min(max(window), replicas)
    return desired, raw


def apply_enhancement(desired, state, config, replicas=None, latency_ms=None):
    """Enhancement-mode overrides on the HPA's desired count.

    MOD limits a scale-down to ``scale_down_cap`` of the current count per
    step; AGGR adds a forced +1 scale-out when latency exceeds the hard
    threshold and the HPA would not scale out.
    """
    rho = state.replicas_total if replicas is None else replicas
    lat = state.last_latency if latency_ms is None else latency_ms
    mode = state.mode
    if mode == "OFF":
        return desired
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}")
    adjusted = max(desired, math.ceil(rho * (1.0 - config.scale_down_cap) - 1e-9))
    adjusted = min(adjusted, config.max_replicas)
    if mode == "AGGR" and lat > config.latency_threshold and desired <= rho:
        adjusted = min(rho + 1, config.max_replicas)
    return adjusted


def step(state, config, offered, rng):
    """Advance the cluster by one control interval.

    ``rng`` is a ``numpy.random.Generator`` used only for P90 jitter.
    """
    offered = int(offered)
    if offered < 0:
        raise ValueError("offered load must be nonnegative")
    total_before = state.replicas_total

    # replicas requested cold_start_steps ago become ready now
    remaining = [p - 1 for p in state.pending]
    ready = state.replicas_ready + sum(1 for p in remaining if p <= 0)
    pending = tuple(p for p in remaining if p > 0)

    admit_cap = int(math.floor(state.multiplier * config.gateway_base_rate))
    admitted = min(offered, admit_cap)
    shed = offered - admitted
    capacity = ready * config.capacity_per_replica
    util = 100.0 * admitted / capacity
    served = min(admitted, int(math.floor(config.overload_serve_factor * capacity)))
    dropped = admitted - served
    avg = latency(util, config)
    p90 = avg * math.exp(P90_Z * config.p90_sigma)
    if config.p90_jitter > 0:
        p90 *= math.exp(config.p90_jitter * rng.standard_normal())
    else:
        rng.standard_normal()  # keep the stream aligned across configs
    # an idle step counts as fully successful
    sr = served / offered if offered > 0 else 1.0

    desired, raw = hpa_recommend(ready, util, state.hpa_target, config, state.recommendations)
    adjusted = apply_enhancement(desired, state, config, replicas=ready + len(pending),
                                 latency_ms=avg)
    adjusted = min(max(adjusted, config.min_replicas), config.max_replicas)
    total = ready + len(pending)
    if adjusted > total:
        pending = pending + (config.cold_start_steps,) * (adjusted - total)
        if config.cold_start_steps == 0:
            ready += len([p for p in pending if p == 0])
            pending = tuple(p for p in pending if p > 0)
    elif adjusted < total:
        cut = total - adjusted
        drop_pending = min(cut, len(pending))
        pending = pending[:len(pending) - drop_pending]
        ready -= cut - drop_pending
    history = (state.recommendations + (raw,))[-max(1, config.hpa_down_window):]

    pod_ram = config.ram_base + config.ram_per_request * admitted / ready
    n_total = ready + len(pending)
    cluster_cpu = util * ready / config.max_replicas
    cluster_ram = config.node_ram_overhead + pod_ram * n_total / config.max_replicas
    new_state = replace(
        state, replicas_ready=ready, pending=pending, last_utilization=util,
        last_latency=avg, last_p90=p90, last_success_ratio=sr, admitted=float(admitted),
        cluster_cpu_total=cluster_cpu, cluster_ram_total=cluster_ram, pod_ram=pod_ram,
        recommendations=history)
    outcome = StepOutcome(
        offered=offered, admitted=admitted, served=served, shed=shed, dropped=dropped,
        avg_latency=avg, p90_latency=p90, success_ratio=sr,
        replica_delta=n_total - total_before, utilization=util,
        replicas_ready=ready, replicas_pending=len(pending))
    return new_state, outcome


EPISODE_COLUMNS = ("t", "offered", "admitted", "served", "dropped", "replicas", "pending",
                   "u_cpu", "latency", "p90", "SR", "T_hpa", "M", "mode", "delta")


def episode_row(t, state, outcome):
    return {
        "t": t, "offered": outcome.offered, "admitted": outcome.admitted,
        "served": outcome.served, "dropped": outcome.dropped,
        "replicas": outcome.replicas_ready, "pending": outcome.replicas_pending,
        "u_cpu": repr(float(outcome.utilization)), "latency": repr(float(outcome.avg_latency)),
        "p90": repr(float(outcome.p90_latency)), "SR": repr(float(outcome.success_ratio)),
        "T_hpa": state.hpa_target, "M": state.multiplier, "mode": state.mode,
        "delta": outcome.replica_delta,
    }


class EpisodeLog:
    """Streams one CSV row per simulator step."""

    def __init__(self, fh):
        self._writer = csv.DictWriter(fh, fieldnames=EPISODE_COLUMNS, lineterminator="\n")
        self._writer.writeheader()

    def write(self, t, state, outcome):
        self._writer.writerow(episode_row(t, state, outcome))


def static_hpa_config(config):
    """Cluster wiring for the static HPA baseline: 5-step scale-down stabilization."""
    return replace(config, hpa_down_window=5)


def config_to_dict(config):
    return asdict(config)
