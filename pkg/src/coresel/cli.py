"""Command-line surface: build-graph, select, simulate, check, run, report.

Exit codes: 0 success, 2 usage/config error, 3 data/format error, 4 resource
error. Logs go to stderr; data goes to files or stdout. All file writes are
atomic (temp file + rename), so an interrupted run leaves no partial output.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
import tempfile

import numpy as np

from .errors import ConfigError, CoreselError, DataError
from .knn_graph import build_graph, dump_graph
from .orchestrator import STRATEGIES, run
from .scoring import selection_scores
from .selector import select_coreset
from .simulator import SimState
from .store import (
    EmbeddingTable,
    ScoreLedger,
    SelectionConfig,
    ingest_embeddings,
    load_score_stream,
    write_embeddings,
    write_score_stream,
)

_RUN_KEYS = {"strategy", "total_steps", "warmup_steps"}
_SIM_KEYS = {"n", "dim", "classes", "cluster_spread", "learning_rate", "drift_rate"}


def _atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic_write_bytes(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _emit(text: str, out_path: str | None) -> None:
    if out_path is None:
        sys.stdout.write(text)
    else:
        _atomic_write_text(out_path, text)


def load_run_config(path: str):
    """Parse and validate the nested run-config document."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config document must be a JSON object")
    unknown = sorted(set(raw) - {"selection", "run", "simulator"})
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}' at the top level")
    for block in ("selection", "run", "simulator"):
        if block not in raw or not isinstance(raw[block], dict):
            raise ConfigError(f"config key '{block}' must be present and a JSON object")

    cfg = SelectionConfig.from_dict(raw["selection"])

    run_block = raw["run"]
    unknown = sorted(set(run_block) - _RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}' in run block")
    if "total_steps" not in run_block:
        raise ConfigError("config key 'total_steps' is required in run block")
    strategy = run_block.get("strategy", "adaptive")
    if strategy not in STRATEGIES:
        raise ConfigError(f"config key 'strategy' must be one of {list(STRATEGIES)}, "
                          f"got '{strategy}'")
    total_steps = int(run_block["total_steps"])
    warmup_steps = run_block.get("warmup_steps")
    if warmup_steps is not None:
        warmup_steps = int(warmup_steps)

    sim_block = raw["simulator"]
    unknown = sorted(set(sim_block) - _SIM_KEYS)
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}' in simulator block")
    for key in ("n", "dim", "classes"):
        if key not in sim_block:
            raise ConfigError(f"config key '{key}' is required in simulator block")
    return cfg, strategy, total_steps, warmup_steps, sim_block


def _build_sim(cfg: SelectionConfig, sim_block: dict) -> SimState:
    drift = float(sim_block.get("drift_rate", 0.0))
    return SimState.create(
        n=int(sim_block["n"]),
        dim=int(sim_block["dim"]),
        classes=int(sim_block["classes"]),
        cluster_spread=float(sim_block.get("cluster_spread", 1.0)),
        learning_rate=float(sim_block.get("learning_rate", 0.1)),
        seed=cfg.seed,
        drift=drift if drift != 0.0 else None,
    )


def cmd_build_graph(args) -> int:
    emb = ingest_embeddings(args.embeddings)
    graph = build_graph(emb, args.k)
    buf = io.StringIO()
    dump_graph(graph, buf)
    _atomic_write_text(args.out, buf.getvalue())
    print(f"n={graph.n} k={graph.k} edges={graph.edge_count()}", file=sys.stderr)
    return 0


def cmd_select(args) -> int:
    emb = ingest_embeddings(args.embeddings)
    ledger = load_score_stream(args.scores, emb.n)
    cfg = SelectionConfig(
        budget_b=args.budget,
        n_s=emb.n,
        budget_eta=args.eta,
        lambda_blend=args.lambda_blend,
        gamma_temp=args.gamma,
        normalize_warp=not args.raw_warp,
    )
    warped = selection_scores(ledger, cfg)
    selection = select_coreset(range(emb.n), args.budget, emb, warped, args.lambda_blend)
    step = max((s for i in range(ledger.n) for s in ledger.steps_for(i)), default=0)
    _emit(json.dumps(selection.to_event(step)) + "\n", args.out)
    print(f"selected {len(selection.members)} of {emb.n} "
          f"objective={selection.objective_value:.6f}", file=sys.stderr)
    return 0


def cmd_simulate(args) -> int:
    sim = SimState.create(
        n=args.n,
        dim=args.dim,
        classes=args.classes,
        cluster_spread=args.cluster_spread,
        learning_rate=args.learning_rate,
        seed=args.seed,
        drift=args.drift_rate if args.drift_rate != 0.0 else None,
    )
    rng = np.random.default_rng(args.seed)
    batch = min(64, sim.n)
    for _ in range(args.steps):
        sim.train_step(rng.choice(sim.n, size=batch, replace=False))
    rows, scores = sim.extract_features(range(sim.n))
    buf = io.BytesIO()
    write_embeddings(EmbeddingTable(rows), buf)
    _atomic_write_bytes(args.out_embeddings, buf.getvalue())
    ledger = ScoreLedger.from_scores(scores, step=sim.step)
    sbuf = io.StringIO()
    write_score_stream(ledger, sbuf)
    _atomic_write_text(args.out_scores, sbuf.getvalue())
    print(f"simulated n={sim.n} d={sim.classes} steps={sim.step} "
          f"train_acc={sim.accuracy():.3f}", file=sys.stderr)
    return 0


def cmd_check(args) -> int:
    cfg, _, total_steps, warmup_steps, sim_block = load_run_config(args.config)
    if warmup_steps is None:
        warmup_steps = int(round(0.1 * total_steps))
    sim = _build_sim(cfg, sim_block)
    report = run("adaptive", cfg, sim, warmup_steps + cfg.t_c, warmup_steps)
    events = report.update_events()
    _emit("".join(json.dumps(e) + "\n" for e in events), args.out)
    print(f"check at step {events[0]['step']}: triggered={events[0]['triggered']}",
          file=sys.stderr)
    return 0


def cmd_run(args) -> int:
    cfg, strategy, total_steps, warmup_steps, sim_block = load_run_config(args.config)
    sim = _build_sim(cfg, sim_block)
    report = run(strategy, cfg, sim, total_steps, warmup_steps)
    os.makedirs(args.out_dir, exist_ok=True)
    _atomic_write_text(os.path.join(args.out_dir, "report.json"),
                       json.dumps(report.to_dict(), indent=2) + "\n")
    _atomic_write_text(os.path.join(args.out_dir, "events.jsonl"),
                       "".join(json.dumps(e) + "\n" for e in report.update_events()))
    _atomic_write_text(os.path.join(args.out_dir, "selections.jsonl"),
                       "".join(json.dumps(e) + "\n" for e in report.selection_events()))
    timings = " ".join(f"{k}={v:.2f}s" for k, v in report.stage_seconds.items())
    print(f"strategy={strategy} final_loss={report.final_loss:.6f} {timings}",
          file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    try:
        with open(args.report, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise DataError(f"report file {args.report} is not valid JSON: {exc}") from exc
    rows = [(s + 1, loss) for s, loss in enumerate(doc.get("warmup_losses", []))]
    for rec in doc.get("intervals", []):
        start = rec["start_step"]
        rows.extend((start + i + 1, loss) for i, loss in enumerate(rec["losses"]))
    text = "step,loss\n" + "".join(f"{step},{loss}\n" for step, loss in rows)
    _emit(text, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="coresel",
        description="Graph-guided adaptive coreset selection toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="build the mutual k-NN graph from an embedding file")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_build_graph)

    p = sub.add_parser("select", help="select a coreset from embeddings and a score stream")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--scores", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--lambda-blend", dest="lambda_blend", type=float, default=0.6)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--raw-warp", action="store_true",
                   help="skip modal normalization of warped scores")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="train the toy model and emit fixture files")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--classes", type=int, required=True)
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--cluster-spread", dest="cluster_spread", type=float, default=1.0)
    p.add_argument("--learning-rate", dest="learning_rate", type=float, default=0.1)
    p.add_argument("--drift-rate", dest="drift_rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-embeddings", dest="out_embeddings", required=True)
    p.add_argument("--out-scores", dest="out_scores", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check", help="run one adaptive check against the simulator")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("run", help="full run (adaptive or baseline) from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", dest="out_dir", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="render a report's loss curve as CSV")
    p.add_argument("--report", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 3
    except IsADirectoryError as exc:
        print(f"error: expected a file: {exc.filename}", file=sys.stderr)
        return 3
    except CoreselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
