"""Command-line entry point: one subcommand per pipeline stage plus serve.

Exit codes: 0 success, 1 runtime failure (one-line diagnostic), 2 config
errors.
"""
from __future__ import annotations

import argparse
import json
import sys

from .pipeline import ALL_STAGES, ConfigError, PipelineError, load_config, run_stage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="firerisk",
        description="Property linkage, discovery, fire-risk scoring, and serving.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="pipeline config JSON")
        p.add_argument("--seed", type=int, help="override config seed")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--data", help="override data directory")

    for stage in ALL_STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        add_common(p)

    p = sub.add_parser("all", help="run every stage through export-geojson")
    add_common(p)

    p = sub.add_parser("serve", help="serve a snapshot over HTTP")
    add_common(p)
    p.add_argument("--snapshot", help="snapshot path (default: <out>/snapshot.geojson)")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--webroot", help="static web map bundle directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {"seed": args.seed, "out_dir": args.out, "data_dir": args.data}
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 2

    try:
        if args.command == "serve":
            return _serve(cfg, args)
        stages = ALL_STAGES if args.command == "all" else (args.command,)
        for stage in stages:
            counts = run_stage(cfg, stage)
            print(f"{stage}: {json.dumps(counts, sort_keys=True, default=str)}")
            rejects = _total_rejects(counts)
            if rejects:
                print(f"{stage}: {rejects} rows rejected (see rejects.csv)",
                      file=sys.stderr)
    except (PipelineError, OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


def _total_rejects(counts: dict) -> int:
    total = 0
    for val in counts.values():
        if isinstance(val, dict) and "rejects" in val:
            total += val["rejects"]
    return total


def _serve(cfg, args) -> int:
    import os

    import uvicorn

    from .service import create_app

    snapshot = args.snapshot or os.path.join(cfg.out_dir, "snapshot.geojson")
    if not os.path.exists(snapshot):
        print(f"error: snapshot not found: {snapshot}", file=sys.stderr)
        return 1
    app = create_app(snapshot, webroot=args.webroot)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


if __name__ == "__main__":
    sys.exit(main())
