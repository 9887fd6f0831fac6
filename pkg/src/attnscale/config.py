"""Run configuration: sectioned key=value files, strict keys, resolved echo.

Every section maps onto one dataclass; an omitted key keeps the dataclass
default and an unknown key is an error. ``resolve`` returns a RunConfig
whose ``to_ini()`` text is written next to every run's outputs, and loading
that text back reproduces the same run.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field, fields

import numpy as np

from . import control
from .neural.policy import PolicyArch
from .reward import RewardWeights, SloThresholds
from .simenv import ClusterConfig
from .trace import IngestConfig, SynthConfig
from .training import DdqnConfig, PpoConfig

AGENT_KINDS = ("ATTN_DOUBLE_LSTM_PPO", "SINGLE_LSTM_PPO", "DDQN", "STATIC_HPA")
SEED_STREAMS = ("trace", "init", "explore", "sim", "update", "eval")


class ConfigError(ValueError):
    pass


@dataclass
class RunSection:
    agent: str = "ATTN_DOUBLE_LSTM_PPO"
    seed: int = 42
    trace: str = ""  # empty: synthesize from [synth]
    split: str = "TEST"
    passes: int = 1  # sweeps over the training days; 1 keeps the 2500-step protocol
    checkpoint_every: int = 0
    static_down_window: int = 5


@dataclass
class ControlSection:
    forecast_window: int = 3
    forecast_alpha: float = 0.5
    latency_scale: float = 100.0
    cpu_scale: float = 200.0
    ram_scale: float = 200.0
    target_scale: float = 90.0
    multiplier_scale: float = 3.0
    mode_scale: float = 2.0
    rate_scale: float = 0.0  # 0: twice the training-split peak


@dataclass
class RewardSection:
    w_sla: float = 0.50
    w_cpu: float = 0.25
    w_succ: float = 0.12
    w_stab: float = 0.08
    w_fcst: float = 0.05
    target_ms: float = 20.0
    thresh_ms: float = 50.0


# section name -> (dataclass, keys that may not be set from a file)
SECTIONS = {
    "run": (RunSection, ()),
    "synth": (SynthConfig, ("seed",)),
    "ingest": (IngestConfig, ("seed",)),
    "cluster": (ClusterConfig, ()),
    "control": (ControlSection, ()),
    "reward": (RewardSection, ()),
    "policy": (PolicyArch, ()),
    "ppo": (PpoConfig, ()),
    "ddqn": (DdqnConfig, ()),
}


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    synth: SynthConfig = field(default_factory=lambda: SynthConfig(noise=0.08))
    ingest: IngestConfig = field(default_factory=IngestConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    control: ControlSection = field(default_factory=ControlSection)
    reward: RewardSection = field(default_factory=RewardSection)
    policy: PolicyArch = field(default_factory=PolicyArch)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    ddqn: DdqnConfig = field(default_factory=DdqnConfig)

    def seeds(self):
        """Independent child seed sequences, one per stream in SEED_STREAMS.

        The master seed feeds a numpy SeedSequence and ``spawn`` fixes the
        order, so adding a stream at the end never shifts the others.
        """
        children = np.random.SeedSequence(self.run.seed).spawn(len(SEED_STREAMS))
        return dict(zip(SEED_STREAMS, children))

    def rngs(self):
        return {k: np.random.default_rng(s) for k, s in self.seeds().items()}

    def trace_seed(self):
        return int(self.seeds()["trace"].generate_state(1)[0])

    def with_seed(self, seed):
        return dataclasses.replace(self, run=dataclasses.replace(self.run, seed=int(seed)))

    def to_ini(self):
        lines = []
        for name in SECTIONS:
            obj = getattr(self, name)
            _, locked = SECTIONS[name]
            lines.append(f"[{name}]")
            for f in fields(obj):
                if f.name in locked:
                    continue
                lines.append(f"{f.name} = {_render(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)


def _render(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ", ".join(_render(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(raw, default, where):
    try:
        if isinstance(default, bool):
            low = raw.strip().lower()
            if low in ("true", "yes", "on", "1"):
                return True
            if low in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            kind = type(default[0]) if default else float
            return tuple(kind(p) for p in parts)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _line_of(text, section, key):
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
        elif current == section and s.split("=", 1)[0].strip().lower() == key:
            return no
    return None


def parse(text, source="<config>"):
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=",),
                                       comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    if parser.defaults():
        raise ConfigError(f"{source}: keys outside any section are not allowed")
    values = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{source}: unknown section [{section}]")
        cls, locked = SECTIONS[section]
        base = getattr(RunConfig(), section)
        defaults = {f.name: getattr(base, f.name) for f in fields(cls)}
        kw = {}
        for key, raw in parser.items(section):
            line = _line_of(text, section, key)
            where = f"{source}:{line} [{section}] {key}" if line else f"{source} [{section}] {key}"
            if key not in defaults or key in locked:
                raise ConfigError(f"{where}: unknown key")
            kw[key] = _coerce(raw, defaults[key], where)
        values[section] = (cls, kw)
    return _build(values)


def _build(values):
    base = RunConfig()
    parts = {}
    for name, (cls, _) in SECTIONS.items():
        _, kw = values.get(name, (cls, {}))
        try:
            parts[name] = dataclasses.replace(getattr(base, name), **kw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{name}]: {exc}") from None
    cfg = RunConfig(**parts)
    validate(cfg)
    return cfg


def validate(cfg):
    if cfg.policy.obs_dim != control.OBS_DIM:
        raise ConfigError(f"[policy] obs_dim: the state dimension is fixed at {control.OBS_DIM}")
    if tuple(cfg.policy.head_sizes) != tuple(control.HEAD_SIZES):
        raise ConfigError(f"[policy] head_sizes: the action space is fixed at {control.HEAD_SIZES}")
    if cfg.run.agent not in AGENT_KINDS:
        raise ConfigError(f"[run] agent: expected one of {', '.join(AGENT_KINDS)}")
    if cfg.run.split not in ("TRAIN", "TEST"):
        raise ConfigError("[run] split: expected TRAIN or TEST")
    if cfg.run.passes < 1:
        raise ConfigError("[run] passes: must be >= 1")
    if cfg.run.static_down_window < 1:
        raise ConfigError("[run] static_down_window: must be >= 1")
    if not 0 < cfg.control.forecast_alpha <= 1 or cfg.control.forecast_window < 1:
        raise ConfigError("[control] forecast window/alpha out of range")
    if cfg.ppo.seq_len < 1 or cfg.ppo.rollout < cfg.ppo.seq_len or cfg.ppo.epochs < 0:
        raise ConfigError("[ppo] rollout/seq_len/epochs inconsistent")
    return cfg


def load(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse(text, source=str(path))


def default():
    return validate(RunConfig())


def env_settings(cfg, trace, agent=None):
    """Simulator, normalization and reward wiring for one agent on ``trace``."""
    from .env import EnvSettings

    c = cfg.control
    norms = control.NormConfig.for_trace(
        trace, max_replicas=cfg.cluster.max_replicas, latency_scale=c.latency_scale,
        cpu_scale=c.cpu_scale, ram_scale=c.ram_scale, target_scale=c.target_scale,
        multiplier_scale=c.multiplier_scale, mode_scale=c.mode_scale)
    if c.rate_scale > 0:
        norms = dataclasses.replace(norms, rate_scale=c.rate_scale)
    cluster = cfg.cluster
    if (agent or cfg.run.agent) == "STATIC_HPA":
        cluster = dataclasses.replace(cluster, hpa_down_window=cfg.run.static_down_window)
    r = cfg.reward
    weights = RewardWeights(r.w_sla, r.w_cpu, r.w_succ, r.w_stab, r.w_fcst)
    slo = SloThresholds(r.target_ms, r.thresh_ms)
    return EnvSettings(cluster=cluster, norms=norms, weights=weights, slo=slo,
                       forecast_window=c.forecast_window, forecast_alpha=c.forecast_alpha)
