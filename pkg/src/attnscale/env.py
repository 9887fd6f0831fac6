"""Episode loop gluing simulator, observation, forecast and reward together.

One episode is one trace day. Telemetry rows produced by :meth:`AutoscaleEnv.step`
carry everything the reports need.
"""

from dataclasses import dataclass, field

import numpy as np

from . import control, reward, simenv


@dataclass
class EnvSettings:
    cluster: simenv.ClusterConfig = field(default_factory=simenv.ClusterConfig)
    norms: control.NormConfig = field(default_factory=control.NormConfig)
    weights: reward.RewardWeights = field(default_factory=reward.RewardWeights)
    slo: reward.SloThresholds = field(default_factory=reward.SloThresholds)
    forecast_window: int = 3
    forecast_alpha: float = 0.5


TELEMETRY_COLUMNS = (
    "t", "day", "step", "offered", "admitted", "served", "shed", "dropped",
    "replicas", "pending", "u_cpu", "latency", "p90", "SR", "T_hpa", "M", "mode", "a_lr",
    "delta", "n_hat", "forecast_error",
    "r_slo", "r_cpu", "r_stab", "r_fcst", "r_succ", "reward",
)


class AutoscaleEnv:
    def __init__(self, days, settings, rng):
        self.days = [np.asarray(d, dtype=np.int64) for d in days]
        self.settings = settings
        self.rng = rng
        self.day = None
        self.t = 0
        self.global_t = 0
        self.state = None
        self.forecast = None

    def reset(self, day):
        s = self.settings
        self.day = day
        self.t = 0
        self.state = simenv.initial_state(s.cluster)
        self.forecast = control.ForecastState(size=s.forecast_window, alpha=s.forecast_alpha)
        return self.observation()

    @property
    def episode_length(self):
        return len(self.days[self.day])

    def observation(self):
        return control.build_observation(self.state, self.forecast, self.t, self.settings.norms)

    def step(self, action):
        """Apply ``action`` for one interval; returns ``(obs, reward, done, row)``."""
        s = self.settings
        decoded = control.decode_action(action)
        self.state = self.state.with_control(decoded.hpa_target, decoded.multiplier,
                                             decoded.mode)
        offered = int(self.days[self.day][self.t])
        prev_forecast = self.forecast.n_hat if self.forecast.window else None
        self.state, out = simenv.step(self.state, s.cluster, offered, self.rng)
        self.forecast = control.update_forecast(self.forecast, out.admitted)
        rb = reward.compute(out.avg_latency, out.utilization, decoded.hpa_target,
                            out.replica_delta, self.state.replicas_total,
                            s.cluster.capacity_per_replica, self.forecast.n_hat,
                            out.success_ratio, s.weights, s.slo)
        # first step of an episode has no earlier forecast to score
        err = abs(prev_forecast - out.admitted) if prev_forecast is not None else 0.0
        row = {
            "t": self.global_t, "day": self.day, "step": self.t,
            "offered": out.offered, "admitted": out.admitted, "served": out.served,
            "shed": out.shed, "dropped": out.dropped, "replicas": out.replicas_ready,
            "pending": out.replicas_pending, "u_cpu": out.utilization,
            "latency": out.avg_latency, "p90": out.p90_latency, "SR": out.success_ratio,
            "T_hpa": decoded.hpa_target, "M": decoded.multiplier, "mode": decoded.mode,
            "a_lr": decoded.lr_flag, "delta": out.replica_delta,
            "n_hat": self.forecast.n_hat, "forecast_error": float(err),
            "r_slo": rb.r_slo, "r_cpu": rb.r_cpu, "r_stab": rb.r_stab, "r_fcst": rb.r_fcst,
            "r_succ": rb.r_succ, "reward": rb.total,
        }
        self.t += 1
        self.global_t += 1
        done = self.t >= self.episode_length
        return self.observation(), rb, done, row
