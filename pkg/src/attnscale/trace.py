"""Workload traces: CSV ingestion, synthetic generation, canonical JSON files.

A trace is a list of days, each an array of ``steps_per_day`` request counts
(requests offered per control step), with a TRAIN/TEST label per day.

Two CSV layouts are accepted, both with a header row:

* binned counts: ``minute,count`` and optionally ``function_id``; ``minute``
  is an absolute minute index (day = minute // 1440);
* per-invocation rows: ``timestamp`` in seconds and optionally
  ``function_id``; each row is one invocation, aggregated to minutes.

Rows from all functions are summed into per-minute totals.
"""

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

MINUTES_PER_DAY = 1440
TRAIN = "TRAIN"
TEST = "TEST"


class TraceError(ValueError):
    pass


class TraceParseError(TraceError):
    def __init__(self, msg, line=None):
        super().__init__(f"line {line}: {msg}" if line is not None else msg)
        self.line = line


class InsufficientDataError(TraceError):
    pass


@dataclass
class IngestConfig:
    seed: int = 0
    days: int = 7
    train_days: int = 5
    steps_per_day: int = 500
    step_seconds: int = 60


@dataclass
class SynthConfig:
    base_rate: float = 150.0
    amplitude: float = 90.0
    burst_prob: float = 0.04
    burst_scale: tuple = (1.8, 2.8)
    burst_len: tuple = (2, 8)
    noise: float = 0.0
    phase_minutes: float = 0.0
    seed: int = 0
    days: int = 7
    train_days: int = 5
    steps_per_day: int = 500
    step_seconds: int = 60


@dataclass
class WorkloadTrace:
    steps_per_day: int
    step_seconds: int
    days: list
    split: list = field(default_factory=list)

    def __post_init__(self):
        self.days = [np.asarray(d, dtype=np.int64) for d in self.days]
        for i, d in enumerate(self.days):
            if d.shape != (self.steps_per_day,):
                raise TraceError(f"day {i} has {d.shape[0]} steps, expected {self.steps_per_day}")
            if np.any(d < 0):
                raise TraceError(f"day {i} has negative counts")
        if len(self.split) != len(self.days):
            raise TraceError("split must label every day")
        for s in self.split:
            if s not in (TRAIN, TEST):
                raise TraceError(f"unknown split label {s!r}")

    def day_indices(self, split):
        return [i for i, s in enumerate(self.split) if s == split]

    def series(self, split):
        """Concatenated per-step demand for one split."""
        idx = self.day_indices(split)
        if not idx:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([self.days[i] for i in idx])

    def split_days(self, split):
        return [self.days[i] for i in self.day_indices(split)]

    def peak(self, split=None):
        days = self.days if split is None else self.split_days(split)
        return int(max((int(d.max()) for d in days), default=0))

    def to_dict(self):
        return {
            "steps_per_day": int(self.steps_per_day),
            "step_seconds": int(self.step_seconds),
            "days": [[int(x) for x in d] for d in self.days],
            "split": list(self.split),
        }

    @classmethod
    def from_dict(cls, obj):
        try:
            return cls(int(obj["steps_per_day"]), int(obj["step_seconds"]),
                       obj["days"], list(obj["split"]))
        except KeyError as exc:
            raise TraceError(f"trace file missing key {exc}") from None


def save(trace, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(trace.to_dict(), fh, separators=(",", ":"))
        fh.write("\n")


def load(path):
    with open(path, encoding="utf-8") as fh:
        return WorkloadTrace.from_dict(json.load(fh))


def demand_at(trace, split, t):
    """Requests offered at step ``t`` of ``split`` (days concatenated)."""
    idx = trace.day_indices(split)
    n = len(idx) * trace.steps_per_day
    if not 0 <= t < n:
        raise IndexError(f"step {t} out of range for {split} split of length {n}")
    day, step = divmod(t, trace.steps_per_day)
    return int(trace.days[idx[day]][step])


def bin_edges(n_minutes=MINUTES_PER_DAY, steps=500):
    """Contiguous partition of ``n_minutes`` into ``steps`` bins of near-equal size."""
    return np.floor(np.arange(steps + 1) * n_minutes / steps).astype(np.int64)


def resample_day(minute_counts, steps=500):
    """Compress one day of per-minute counts into ``steps`` bins.

    Each bin's value is its mean count scaled by the nominal bin width
    ``n_minutes / steps``, rounded half-up, so a constant series keeps its
    per-minute rate times the compression factor and day totals are preserved
    to within rounding.
    """
    counts = np.asarray(minute_counts, dtype=np.float64)
    n = counts.shape[0]
    edges = bin_edges(n, steps)
    sums = np.add.reduceat(counts, edges[:-1])
    widths = np.diff(edges)
    means = sums / widths
    return np.floor(means * (n / steps) + 0.5).astype(np.int64)


def _read_minute_totals(rows):
    """Parse CSV rows into a {minute: total} map; raises with line numbers."""
    reader = csv.reader(rows)
    try:
        header = next(reader)
    except StopIteration:
        raise TraceParseError("empty input") from None
    cols = [h.strip().lower() for h in header]
    totals = {}
    if "minute" in cols and "count" in cols:
        mi, ci = cols.index("minute"), cols.index("count")
        mode = "binned"
    elif "timestamp" in cols:
        ti = cols.index("timestamp")
        mode = "events"
    else:
        raise TraceParseError("header must contain minute,count or timestamp", line=1)
    last = -math.inf
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if mode == "binned":
                minute = int(row[mi])
                count = float(row[ci])
            else:
                minute = int(math.floor(float(row[ti]) / 60.0))
                count = 1.0
        except (ValueError, IndexError):
            raise TraceParseError(f"malformed row {row!r}", line=lineno) from None
        if minute < 0 or count < 0 or not math.isfinite(count):
            raise TraceParseError(f"negative or non-finite value in {row!r}", line=lineno)
        if minute < last:
            raise TraceParseError("timestamps must be non-decreasing within a file",
                                  line=lineno)
        last = minute
        totals[minute] = totals.get(minute, 0.0) + count
    if not totals:
        raise TraceParseError("no data rows")
    return totals


def ingest(rows, config=None):
    """Build a :class:`WorkloadTrace` from CSV text lines.

    Whole days present in the input are sampled uniformly without replacement
    under ``config.seed``; the first ``train_days`` sampled days (in sampled
    order) are TRAIN, the rest TEST. Missing minutes inside a day count as 0.
    """
    config = config or IngestConfig()
    if config.train_days > config.days or config.train_days < 0:
        raise TraceError("train_days must be within [0, days]")
    totals = _read_minute_totals(rows)
    first_day = min(totals) // MINUTES_PER_DAY
    last_day = max(totals) // MINUTES_PER_DAY
    n_days = last_day - first_day + 1
    minutes = np.zeros(n_days * MINUTES_PER_DAY)
    for m, c in totals.items():
        minutes[m - first_day * MINUTES_PER_DAY] += c
    # a day counts as whole only if the data reaches its last minute
    max_minute = max(totals) - first_day * MINUTES_PER_DAY
    whole = [d for d in range(n_days) if (d + 1) * MINUTES_PER_DAY - 1 <= max_minute]
    if len(whole) < config.days:
        raise InsufficientDataError(
            f"need {config.days} whole days, input has {len(whole)}")
    rng = np.random.default_rng(config.seed)
    chosen = rng.choice(len(whole), size=config.days, replace=False)
    days = []
    for d in (whole[i] for i in chosen):
        day = minutes[d * MINUTES_PER_DAY:(d + 1) * MINUTES_PER_DAY]
        days.append(resample_day(day, config.steps_per_day))
    split = [TRAIN] * config.train_days + [TEST] * (config.days - config.train_days)
    return WorkloadTrace(config.steps_per_day, config.step_seconds, days, split)


def ingest_file(path, config=None):
    with open(path, encoding="utf-8", newline="") as fh:
        return ingest(fh, config)


def diurnal(step, steps_per_day, base, amplitude, phase_minutes=0.0):
    """Noise-free synthetic demand at a step: a sinusoid with a one-day period,
    minimum at minute ``phase_minutes`` and maximum half a day later."""
    minute = step * MINUTES_PER_DAY / steps_per_day
    return base - amplitude * np.cos(2.0 * np.pi * (minute - phase_minutes) / MINUTES_PER_DAY)


def synthesize(config=None):
    """Deterministic diurnal trace with multiplicative noise and random bursts.

    Demand at step t is ``base - amplitude*cos(2*pi*minute/1440)`` times
    ``(1 + noise*N(0,1))``; a burst starts at each step with probability
    ``burst_prob``, lasts a uniform number of steps in ``burst_len`` and
    multiplies demand by a uniform factor in ``burst_scale``.
    """
    config = config or SynthConfig()
    if config.base_rate <= 0:
        raise TraceError("base_rate must be positive")
    if config.amplitude < 0 or config.amplitude > config.base_rate:
        raise TraceError("amplitude must be within [0, base_rate]")
    if not 0.0 <= config.burst_prob <= 1.0:
        raise TraceError("burst_prob must be within [0, 1]")
    rng = np.random.default_rng(config.seed)
    n = config.steps_per_day
    steps = np.arange(n)
    shape = diurnal(steps, n, config.base_rate, config.amplitude, config.phase_minutes)
    days = []
    for _ in range(config.days):
        demand = shape.copy()
        if config.noise > 0:
            demand = demand * np.maximum(0.0, 1.0 + config.noise * rng.standard_normal(n))
        if config.burst_prob > 0:
            mult = np.ones(n)
            starts = rng.random(n) < config.burst_prob
            lo_len, hi_len = config.burst_len
            lo_s, hi_s = config.burst_scale
            for t in np.flatnonzero(starts):
                length = int(rng.integers(lo_len, hi_len + 1))
                factor = rng.uniform(lo_s, hi_s)
                mult[t:t + length] = np.maximum(mult[t:t + length], factor)
            demand = demand * mult
        days.append(np.floor(demand + 0.5).astype(np.int64))
    split = [TRAIN] * config.train_days + [TEST] * (config.days - config.train_days)
    return WorkloadTrace(n, config.step_seconds, days, split)
