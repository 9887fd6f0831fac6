"""Command-line entry point: ``attnscale <subcommand>``.

Exit codes: 0 ok, 2 config/usage error, 3 data error, 4 numeric divergence.
The output root defaults to ``$ATTNSCALE_OUT`` (else ``runs``) unless
``--out`` names a directory explicitly.
"""

import argparse
import csv
import dataclasses
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import agents, config as C, telemetry, trace as tr, training
from .env import TELEMETRY_COLUMNS
from .neural import checkpoint as ckpt
from .neural.policy import PolicyArch
from .neural.tensor import NumericError, Tensor

log = logging.getLogger("attnscale")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED = 0, 2, 3, 4
OUT_ENV = "ATTNSCALE_OUT"
RESOLVED_NAME = "config.resolved.ini"
CHECKPOINT_NAME = "checkpoint.json"


class CliError(Exception):
    def __init__(self, msg, code):
        super().__init__(msg)
        self.code = code


# ---------------------------------------------------------------- helpers

def load_config(args):
    cfg = C.load(args.config) if args.config else C.default()
    if getattr(args, "seed", None) is not None:
        cfg = cfg.with_seed(args.seed)
    if getattr(args, "agent", None):
        cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, agent=args.agent))
        C.validate(cfg)
    return cfg


def out_dir(args, cfg, command):
    if args.out:
        return Path(args.out)
    root = Path(os.environ.get(OUT_ENV, "runs"))
    return root / f"{cfg.run.agent.lower()}-seed{cfg.run.seed}-{command}"


def resolve_trace(cfg):
    """Load, ingest or synthesize the workload named by the config."""
    path = cfg.run.trace
    if not path:
        synth = dataclasses.replace(cfg.synth, seed=cfg.trace_seed())
        return tr.synthesize(synth)
    p = Path(path)
    if not p.is_file():
        raise CliError(f"trace file not found: {p}", EXIT_DATA)
    if p.suffix.lower() == ".csv":
        return tr.ingest_file(p, dataclasses.replace(cfg.ingest, seed=cfg.trace_seed()))
    try:
        return tr.load(p)
    except (ValueError, KeyError, TypeError) as exc:
        raise CliError(f"unreadable trace {p}: {exc}", EXIT_DATA) from None


def write_rows(path, rows, columns):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n",
                           extrasaction="ignore", restval="")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def rng_state(rng):
    return rng.bit_generator.state


def save_checkpoint(path, cfg, agent, optimizer_state, extra):
    params = agent.params
    arch = agent.arch.to_dict() if hasattr(agent, "arch") else {"q_hidden": agents.Q_HIDDEN}
    doc = {"config": cfg.to_ini(), "optimizer": optimizer_state, **extra}
    tmp = Path(str(path) + ".tmp")
    ckpt.save(tmp, cfg.run.agent, arch, params, doc)
    os.replace(tmp, path)


def expected_shapes(cfg):
    """Parameter shapes of a fresh agent of the configured kind."""
    agent = build_agent(cfg, np.random.default_rng(0))
    return {k: v.data.shape for k, v in agent.params.items()}


def build_agent(cfg, rng):
    kind = agents.AgentKind(cfg.run.agent)
    if kind.is_ppo:
        arch = cfg.policy if kind is agents.AgentKind.ATTN_DOUBLE_LSTM_PPO else cfg.policy.single_lstm()
        return agents.PPOAgent(kind, arch=arch, rng=rng)
    return agents.make_agent(kind, rng=rng)


def load_agent(cfg, path):
    kind = agents.AgentKind(cfg.run.agent)
    try:
        doc = ckpt.load(path, expected_kind=kind.value, expected_shapes=expected_shapes(cfg))
    except FileNotFoundError:
        raise CliError(f"checkpoint not found: {path}", EXIT_CONFIG) from None
    except ckpt.CheckpointError as exc:
        raise CliError(str(exc), EXIT_CONFIG) from None
    params = {k: Tensor(v, requires_grad=True, name=k) for k, v in doc["params"].items()}
    if kind.is_ppo:
        return agents.PPOAgent(kind, arch=PolicyArch.from_dict(doc["arch"]), params=params)
    return agents.DDQNAgent(params=params)


def _prepare_out(path):
    path.mkdir(parents=True, exist_ok=True)
    return path


# ---------------------------------------------------------------- commands

def cmd_synthesize(args):
    cfg = load_config(args)
    trace = resolve_trace(dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, trace="")))
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs")) / "trace.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    tr.save(trace, out)
    print(out)
    return EXIT_OK


def cmd_ingest(args):
    cfg = load_config(args)
    src = Path(args.input)
    if not src.is_file():
        raise CliError(f"trace file not found: {src}", EXIT_DATA)
    trace = tr.ingest_file(src, dataclasses.replace(cfg.ingest, seed=cfg.trace_seed()))
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs")) / "trace.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    tr.save(trace, out)
    print(out)
    return EXIT_OK


def train_run(cfg, out):
    """Train the configured agent; writes checkpoint, train log and resolved config."""
    trace = resolve_trace(cfg)
    days = trace.split_days(tr.TRAIN)
    if not days:
        raise CliError("trace has no TRAIN days", EXIT_DATA)
    _prepare_out(out)
    (out / RESOLVED_NAME).write_text(cfg.to_ini(), encoding="utf-8")
    rngs = cfg.rngs()
    agent = build_agent(cfg, rngs["init"])
    settings = C.env_settings(cfg, trace)
    train_cfg = training.TrainConfig(passes=cfg.run.passes,
                                     checkpoint_every=cfg.run.checkpoint_every)
    kind = agents.AgentKind(cfg.run.agent)
    rows = []
    state = {"last_good": None}
    ck_path = out / CHECKPOINT_NAME

    def extra():
        return {"rng": {k: rng_state(v) for k, v in rngs.items()},
                "train_steps": sum(int(r.get("steps", 0)) for r in rows)}

    def on_update(owner, row):
        rows.append(row)
        opt = owner.optimizer if kind.is_ppo else owner
        meta = extra()
        if kind.is_ppo:
            meta["kl_beta"] = owner.beta
            meta["updates"] = owner.updates
        state["last_good"] = ({k: v.data.copy() for k, v in agent.params.items()},
                              opt.state_dict(), meta)
        every = cfg.run.checkpoint_every
        if every and len(rows) % every == 0:
            save_checkpoint(out / f"checkpoint-{len(rows):04d}.json", cfg, agent,
                            opt.state_dict(), meta)

    try:
        if kind.is_ppo:
            trainer, _ = training.train_ppo(agent, days, settings, cfg.ppo, train_cfg,
                                            rngs["explore"], rngs["update"], rngs["sim"],
                                            on_update=on_update)
            opt_state = trainer.optimizer.state_dict()
            meta = {**extra(), "kl_beta": trainer.beta, "updates": trainer.updates}
        elif kind is agents.AgentKind.DDQN:
            optimizer, _ = training.train_ddqn(agent, days, settings, cfg.ddqn, train_cfg,
                                               rngs["explore"], rngs["update"], rngs["sim"],
                                               on_update=on_update)
            opt_state = optimizer.state_dict()
            meta = extra()
        else:
            raise CliError("STATIC_HPA has no parameters to train", EXIT_CONFIG)
    except (training.TrainingDiverged, NumericError) as exc:
        write_rows(out / "train_log.csv", rows, _log_columns(rows))
        if state["last_good"] is not None:
            params, opt_state, meta = state["last_good"]
            for k, v in params.items():
                agent.params[k].data = v
            save_checkpoint(ck_path, cfg, agent, opt_state, {**meta, "diverged": str(exc)})
        raise CliError(f"training diverged: {exc}", EXIT_DIVERGED) from None
    write_rows(out / "train_log.csv", rows, _log_columns(rows))
    save_checkpoint(ck_path, cfg, agent, opt_state, meta)
    return agent, trace


def _log_columns(rows):
    cols = list(training.TRAIN_LOG_COLUMNS)
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    return cols


def cmd_train(args):
    cfg = load_config(args)
    out = out_dir(args, cfg, "train")
    train_run(cfg, out)
    print(out)
    return EXIT_OK


def evaluate_run(cfg, out, checkpoint=None, allow_train_split=False, agent=None, trace=None):
    if cfg.run.split == tr.TRAIN and not allow_train_split:
        raise CliError("evaluating on the TRAIN split needs --allow-train-split", EXIT_CONFIG)
    kind = agents.AgentKind(cfg.run.agent)
    if agent is None:
        if kind is agents.AgentKind.STATIC_HPA:
            agent = agents.StaticHPAAgent()
        elif checkpoint is None:
            raise CliError(f"{kind.value} needs --checkpoint", EXIT_CONFIG)
        else:
            agent = load_agent(cfg, checkpoint)
    trace = trace if trace is not None else resolve_trace(cfg)
    days = trace.split_days(cfg.run.split)
    if not days:
        raise CliError(f"trace has no {cfg.run.split} days", EXIT_DATA)
    _prepare_out(out)
    (out / RESOLVED_NAME).write_text(cfg.to_ini(), encoding="utf-8")
    rngs = cfg.rngs()
    rows = training.evaluate(agent, days, C.env_settings(cfg, trace), rngs["eval"])
    summary = telemetry.write_reports(out, rows, TELEMETRY_COLUMNS,
                                      {"agent": kind.value, "seed": cfg.run.seed,
                                       "split": cfg.run.split})
    return summary


def cmd_evaluate(args):
    cfg = load_config(args)
    out = out_dir(args, cfg, "evaluate")
    evaluate_run(cfg, out, args.checkpoint, args.allow_train_split)
    print(out)
    return EXIT_OK


def cmd_run(args):
    """Train (unless static) then evaluate into one directory."""
    cfg = load_config(args)
    out = out_dir(args, cfg, "run")
    agent = trace = None
    if cfg.run.agent != "STATIC_HPA":
        agent, trace = train_run(cfg, out)
    evaluate_run(cfg, out, allow_train_split=args.allow_train_split, agent=agent, trace=trace)
    print(out)
    return EXIT_OK


def cmd_compare(args):
    named = []
    for d in args.runs:
        p = Path(d) / "summary.json"
        if not p.is_file():
            log.warning("skipping %s: no summary.json", d)
            continue
        doc = telemetry.read_summary(p)
        named.append((doc.get("agent", Path(d).name), doc))
    if len(named) < 2:
        raise CliError("compare needs at least two completed runs", EXIT_DATA)
    matrix, deltas = telemetry.compare(named)
    out = Path(args.out) if args.out else Path(os.environ.get(OUT_ENV, "runs"))
    out.mkdir(parents=True, exist_ok=True)
    write_rows(out / "compare.csv", matrix, ["agent", *telemetry.COMPARE_METRICS])
    write_rows(out / "compare_deltas.csv", deltas,
               ["baseline", "candidate", "churn_reduction", "p90_reduction", "hard_slo_delta"])
    table = telemetry.markdown_table(matrix)
    lines = [table, ""]
    for d in deltas:
        lines.append(f"{d['candidate']} vs {d['baseline']}: churn {100 * d['churn_reduction']:.1f}% "
                     f"lower, P90 {100 * d['p90_reduction']:.1f}% lower, hard-SLO "
                     f"{100 * d['hard_slo_delta']:+.1f} pts")
    text = "\n".join(lines) + "\n"
    (out / "compare.md").write_text(text, encoding="utf-8")
    print(text, end="")
    return EXIT_OK


def cmd_report(args):
    """Rebuild summary and curve files from a run directory's series.csv."""
    run = Path(args.run)
    series = run / "series.csv"
    if not series.is_file():
        raise CliError(f"no series.csv in {run}", EXIT_DATA)
    rows = telemetry.read_series(series)
    out = Path(args.out) if args.out else run
    _prepare_out(out)
    extra = {}
    old = run / "summary.json"
    if old.is_file():
        doc = telemetry.read_summary(old)
        extra = {k: doc[k] for k in ("agent", "seed", "split") if k in doc}
    summary = telemetry.write_reports(out, rows, TELEMETRY_COLUMNS, extra)
    print(telemetry.markdown_table([{"agent": extra.get("agent", run.name),
                                     **{m: getattr(summary, m) for m in
                                        telemetry.COMPARE_METRICS}}]))
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser():
    p = argparse.ArgumentParser(prog="attnscale", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True, agent=True):
        sp.add_argument("--config", help="INI run configuration")
        sp.add_argument("--out", help="output path (overrides $%s)" % OUT_ENV)
        if seed:
            sp.add_argument("--seed", type=int, help="master seed")
        if agent:
            sp.add_argument("--agent", choices=C.AGENT_KINDS)

    sp = sub.add_parser("ingest", help="CSV invocation trace -> canonical trace JSON")
    sp.add_argument("input")
    common(sp, agent=False)
    sp.set_defaults(func=cmd_ingest)

    sp = sub.add_parser("synthesize", help="synthetic diurnal+burst trace JSON")
    common(sp, agent=False)
    sp.set_defaults(func=cmd_synthesize)

    sp = sub.add_parser("train", help="train an agent on the TRAIN split")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="greedy replay of a checkpoint on the test split")
    common(sp)
    sp.add_argument("--checkpoint")
    sp.add_argument("--allow-train-split", action="store_true")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("run", help="train then evaluate into one directory")
    common(sp)
    sp.add_argument("--allow-train-split", action="store_true")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="join run summaries into one table")
    sp.add_argument("runs", nargs="+")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("report", help="rebuild report files from a run's series.csv")
    sp.add_argument("run")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except C.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except tr.TraceError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (training.TrainingDiverged, NumericError) as exc:
        print(f"numeric divergence: {exc}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
