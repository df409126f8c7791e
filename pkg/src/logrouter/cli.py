"""Command-line front door: ingest, drain training, one-shot queries, an
interactive repl, the HTTP service, routing explanation, and evaluation runs.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources

from .config import ServiceConfig, build_engine
from .drain import DrainMiner
from .errors import LogRouterError
from .evaluation import TickClock, run_eval, seeded_trace_factory
from .ingest import SourceDescriptor, normalize_line


def _load_config(args) -> ServiceConfig:
    cfg = ServiceConfig.from_env_or_default(getattr(args, "config", None))
    if getattr(args, "snapshot_dir", None):
        cfg.snapshot_dir = args.snapshot_dir
    return cfg


def _descriptor(args) -> SourceDescriptor:
    return SourceDescriptor(
        dataset=args.dataset,
        namespace=args.namespace,
        app=args.app,
        pod=args.pod,
        container=args.container,
        ts_format=args.ts_format,
    )


def _add_source_flags(parser) -> None:
    parser.add_argument("--dataset", required=True)
    parser.add_argument("--namespace", default="unknown")
    parser.add_argument("--app", default="unknown")
    parser.add_argument("--pod", default="unknown")
    parser.add_argument("--container", default="unknown")
    parser.add_argument("--ts-format", dest="ts_format", default=None)


def cmd_ingest(args) -> int:
    cfg = _load_config(args)
    engine = build_engine(cfg)
    report, warnings = engine.ingest_file(args.file, _descriptor(args))
    if cfg.snapshot_dir:
        engine.save_snapshot(cfg.snapshot_dir)
    out = report.to_dict()
    out["warnings"] = warnings
    print(json.dumps(out))
    return 0


def cmd_train_drain(args) -> int:
    cfg = _load_config(args)
    miner = DrainMiner(
        depth=cfg.drain_depth,
        sim_th=cfg.drain_sim_th,
        max_children=cfg.drain_max_children,
        id_prefix_len=cfg.drain_id_prefix_len,
    )
    src = _descriptor(args)
    records = []
    with open(args.file, "r", encoding="utf-8", errors="replace") as fh:
        for raw in fh:
            rec = normalize_line(raw, src)
            if rec is not None:
                records.append(rec)
    miner.train(records)
    miner.save(args.state_out)
    print(f"trained {len(records)} records into {len(miner.clusters)} templates -> {args.state_out}")
    return 0


def cmd_freeze_drain(args) -> int:
    miner = DrainMiner.load(args.state)
    miner.freeze()
    out = args.out or args.state
    miner.save(out)
    print(f"frozen state written to {out}")
    return 0


def cmd_query(args) -> int:
    cfg = _load_config(args)
    engine = build_engine(cfg)
    response = engine.answer_query(
        args.question, strategy=args.strategy, ablation=args.ablation, dataset=args.dataset
    )
    if args.json:
        print(json.dumps(response.to_dict(), sort_keys=True))
    else:
        _print_response(response)
    return 0


def _print_response(response) -> None:
    print(f"[route: {response.route.path}"
          + (f" | tier: {response.l2.tier}" if response.l2 else "")
          + (" | DEGRADED" if response.degraded else "")
          + "]")
    print(response.answer)
    stages = ", ".join(f"{k}={v * 1000:.1f}ms" for k, v in sorted(response.latencies.items()))
    print(f"-- {stages}")


def cmd_explain(args) -> int:
    cfg = _load_config(args)
    engine = build_engine(cfg)
    decision, l2 = engine.explain(args.question)
    print(json.dumps({"l1": decision.to_dict(), "l2": l2.to_dict()}, sort_keys=True, indent=2))
    return 0


def cmd_repl(args) -> int:
    cfg = _load_config(args)
    engine = build_engine(cfg)
    print("logrouter repl -- empty line quits")
    while True:
        try:
            question = input("? ").strip()
        except (EOFError, KeyboardInterrupt):
            print()
            return 0
        if not question:
            return 0
        try:
            response = engine.answer_query(question, strategy=args.strategy, ablation=args.ablation)
            _print_response(response)
        except LogRouterError as exc:
            print(f"error: {exc}")


def cmd_serve(args) -> int:
    from .service import serve

    serve(_load_config(args))
    return 0


def cmd_eval(args) -> int:
    cfg = _load_config(args)
    clock = TickClock() if args.deterministic else None
    trace_factory = seeded_trace_factory(args.seed) if args.deterministic else None
    engine = build_engine(cfg, clock=clock, trace_id_factory=trace_factory)
    questions = args.questions
    if questions == "bundled":
        questions = str(resources.files("logrouter.data").joinpath("questions_mini.jsonl"))
    if args.corpus:
        engine.ingest_file(args.corpus, SourceDescriptor(dataset=args.corpus_dataset))
    report = run_eval(
        questions,
        engine,
        condition=args.condition,
        mode=args.mode,
        out_dir=args.out,
        k=args.k,
        dataset_dir=args.dataset_dir,
    )
    print(report.to_markdown())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="logrouter", description=__doc__)
    parser.add_argument("--config", default=None, help="TOML/JSON config path (or LOGROUTER_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="ingest a log file into the indexes")
    p.add_argument("--file", required=True)
    _add_source_flags(p)
    p.add_argument("--snapshot-dir", default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train-drain", help="train a miner state from a log file")
    p.add_argument("--file", required=True)
    _add_source_flags(p)
    p.add_argument("--state-out", required=True)
    p.set_defaults(func=cmd_train_drain)

    p = sub.add_parser("freeze-drain", help="freeze a miner state file")
    p.add_argument("--state", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_freeze_drain)

    p = sub.add_parser("query", help="answer one question")
    p.add_argument("--question", "-q", required=True)
    p.add_argument("--strategy", default=None)
    p.add_argument("--ablation", default=None)
    p.add_argument("--dataset", default=None)
    p.add_argument("--snapshot-dir", default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("explain", help="route a question without executing it")
    p.add_argument("--question", "-q", required=True)
    p.add_argument("--snapshot-dir", default=None)
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("repl", help="interactive query loop")
    p.add_argument("--strategy", default=None)
    p.add_argument("--ablation", default=None)
    p.add_argument("--snapshot-dir", default=None)
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("eval", help="replay a labeled question set")
    p.add_argument("--questions", required=True, help="JSONL path, or 'bundled' for the mini set")
    p.add_argument("--condition", default="full")
    p.add_argument("--mode", choices=["online", "offline"], default="online")
    p.add_argument("--out", default=None)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--dataset-dir", default=None)
    p.add_argument("--corpus", default=None, help="log file ingested before the run (online mode)")
    p.add_argument("--corpus-dataset", default="mini")
    p.add_argument("--snapshot-dir", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--deterministic", action=argparse.BooleanOptionalAction, default=True)
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except LogRouterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
