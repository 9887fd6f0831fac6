"""Evaluation metrics and report files.

Everything here is post-processing over telemetry rows (dicts with the
columns of :data:`attnscale.env.TELEMETRY_COLUMNS`).
"""

import csv
import json
import math
from dataclasses import dataclass, asdict

import numpy as np

SUMMARY_SCHEMA_VERSION = 1


class MetricsError(ValueError):
    pass


def churn(replicas):
    """Total replica movement: sum of absolute first differences."""
    r = np.asarray(replicas, dtype=np.float64)
    if r.size == 0:
        raise MetricsError("churn of an empty series")
    return float(np.abs(np.diff(r)).sum())


def percentile(samples, p):
    """Nearest-rank percentile: the ceil(p/100 * n)-th smallest sample."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise MetricsError("percentile of an empty sample")
    if not 0 < p <= 100:
        raise MetricsError("p must be in (0, 100]")
    rank = math.ceil(p / 100.0 * x.size - 1e-12)
    return float(x[max(rank, 1) - 1])


def cdf(samples, grid):
    """Empirical CDF: fraction of samples <= each grid point."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    if x.size == 0:
        raise MetricsError("cdf of an empty sample")
    return np.searchsorted(x, np.asarray(grid, dtype=np.float64), side="right") / x.size


def silverman_bandwidth(x):
    x = np.asarray(x, dtype=np.float64)
    sigma = x.std(ddof=1) if x.size > 1 else 0.0
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sigma, (q75 - q25) / 1.34) if q75 > q25 else sigma
    h = 0.9 * spread * x.size ** (-0.2)
    if h <= 0:
        # zero-variance input
        h = 1e-3 * max(1.0, abs(float(x.mean())))
    return h


def kde(errors, grid, bandwidth=None):
    """Gaussian kernel density estimate evaluated on ``grid``."""
    x = np.asarray(errors, dtype=np.float64)
    if x.size == 0:
        raise MetricsError("kde of an empty sample")
    h = silverman_bandwidth(x) if bandwidth is None else float(bandwidth)
    g = np.asarray(grid, dtype=np.float64)
    z = (g[:, None] - x[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (x.size * h * math.sqrt(2.0 * math.pi))


@dataclass
class RunSummary:
    steps: int
    avg_cpu: float
    avg_latency: float
    missed_fraction: float
    missed_fraction_step_mean: float
    target_slo_compliance: float
    hard_slo_compliance: float
    replicas_mean: float
    replicas_std: float
    churn: float
    p90_latency: float  # nearest-rank P90 over per-step average latencies
    p90_step_mean: float  # mean of the simulator's per-step P90 estimates
    p95_latency: float
    mean_forecast_error: float
    mean_reward: float

    def to_dict(self):
        return {"schema_version": SUMMARY_SCHEMA_VERSION, **asdict(self)}


def _col(records, key):
    return np.array([float(r[key]) for r in records])


def summarize(records, target_ms=20.0, thresh_ms=50.0):
    if not records:
        raise MetricsError("no telemetry records")
    lat = _col(records, "latency")
    offered = _col(records, "offered")
    missed = _col(records, "shed") + _col(records, "dropped")
    busy = offered > 0
    replicas = _col(records, "replicas")
    reward_col = _col(records, "reward") if "reward" in records[0] else np.zeros(len(records))
    fe = _col(records, "forecast_error") if "forecast_error" in records[0] else np.zeros(1)
    return RunSummary(
        steps=len(records),
        avg_cpu=float(_col(records, "u_cpu").mean()),
        avg_latency=float(lat.mean()),
        missed_fraction=float(missed[busy].sum() / offered[busy].sum()) if busy.any() else 0.0,
        missed_fraction_step_mean=float((missed[busy] / offered[busy]).mean()) if busy.any()
        else 0.0,
        target_slo_compliance=float(np.mean(lat <= target_ms)),
        hard_slo_compliance=float(np.mean(lat <= thresh_ms)),
        replicas_mean=float(replicas.mean()),
        replicas_std=float(replicas.std()),
        churn=churn(replicas),
        p90_latency=percentile(lat, 90),
        p90_step_mean=float(_col(records, "p90").mean()),
        p95_latency=percentile(lat, 95),
        mean_forecast_error=float(fe.mean()),
        mean_reward=float(reward_col.mean()),
    )


# ---------------------------------------------------------------- files

def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def write_series(path, records, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n",
                           extrasaction="ignore")
        w.writeheader()
        for r in records:
            w.writerow({k: _fmt(r[k]) for k in columns if k in r})


_NUMERIC_TEXT = {"mode", "a_lr"}


def read_series(path):
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            rows.append({k: (v if k in _NUMERIC_TEXT else float(v)) for k, v in r.items()})
    return rows


def write_summary(path, summary, extra=None):
    doc = summary.to_dict()
    if extra:
        doc.update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_summary(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("schema_version") != SUMMARY_SCHEMA_VERSION:
        raise MetricsError(f"{path}: unsupported summary schema {doc.get('schema_version')}")
    return doc


def write_curve(path, xname, yname, grid, values):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([xname, yname])
        for x, y in zip(grid, values):
            w.writerow([repr(float(x)), repr(float(y))])


def write_reports(out_dir, records, columns, extra_summary=None):
    """summary.json, series.csv and the CDF/KDE curve files for one run."""
    from pathlib import Path
    out = Path(out_dir)
    summary = summarize(records)
    write_summary(out / "summary.json", summary, extra_summary)
    write_series(out / "series.csv", records, columns)
    lat = _col(records, "latency")
    cpu = _col(records, "u_cpu")
    lat_grid = np.linspace(0.0, max(200.0, float(lat.max())), 401)
    cpu_grid = np.linspace(0.0, max(200.0, float(cpu.max())), 401)
    write_curve(out / "cdf_latency.csv", "latency_ms", "cdf", lat_grid, cdf(lat, lat_grid))
    write_curve(out / "cdf_cpu.csv", "u_cpu", "cdf", cpu_grid, cdf(cpu, cpu_grid))
    fe = _col(records, "forecast_error")
    h = silverman_bandwidth(fe)
    fe_grid = np.linspace(float(fe.min()) - 4 * h, float(fe.max()) + 4 * h, 401)
    write_curve(out / "kde_forecast_error.csv", "abs_error", "density", fe_grid, kde(fe, fe_grid, h))
    return summary


COMPARE_METRICS = ("avg_cpu", "avg_latency", "missed_fraction", "target_slo_compliance",
                   "hard_slo_compliance", "replicas_mean", "replicas_std", "churn",
                   "p90_latency", "p90_step_mean")


def relative_reduction(baseline, candidate):
    """(baseline - candidate) / baseline; 0 when both are 0."""
    if baseline == 0:
        return 0.0 if candidate == 0 else -math.inf
    return (baseline - candidate) / baseline


def compare(named_summaries):
    """Rows of a metric matrix plus pairwise churn/P90 reductions.

    ``named_summaries`` is a list of ``(label, summary_dict)``.
    """
    matrix = [{"agent": label, **{m: s[m] for m in COMPARE_METRICS}}
              for label, s in named_summaries]
    deltas = []
    for i, (la, sa) in enumerate(named_summaries):
        for lb, sb in named_summaries[i + 1:]:
            deltas.append({
                "baseline": la, "candidate": lb,
                "churn_reduction": relative_reduction(sa["churn"], sb["churn"]),
                "p90_reduction": relative_reduction(sa["p90_latency"], sb["p90_latency"]),
                "hard_slo_delta": sb["hard_slo_compliance"] - sa["hard_slo_compliance"],
            })
    return matrix, deltas


def markdown_table(matrix):
    cols = ["agent", *COMPARE_METRICS]
    lines = ["| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for row in matrix:
        cells = [row["agent"]] + [f"{row[m]:.4g}" for m in COMPARE_METRICS]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines)
