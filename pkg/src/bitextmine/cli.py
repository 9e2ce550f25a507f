"""Command-line interface: per-stage commands and a full-pipeline runner.

Command shape: ``bitextmine <stage> [flags]`` or ``bitextmine run-all
[flags]``.  Machine-readable reports go to --report as JSON; human
progress goes to standard error.  Exit codes: 0 ok, 1 fatal
configuration error, 2 fatal runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import describe, load_config
from .errors import ConfigInvalid, PipelineError
from .stages import STAGES, run_all, run_stage

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bitextmine",
        description="Mine a multilingual parallel corpus from bilingual lecture transcripts.",
    )
    parser.add_argument("--version", action="store_true", help="print version and exit")
    sub = parser.add_subparsers(dest="command")
    for name in (*STAGES, "run-all"):
        p = sub.add_parser(name, help=f"run the {name} stage" if name != "run-all" else "run every stage in order")
        _add_common_flags(p)
    return parser


def _add_common_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file; flags override its values")
    p.add_argument("--manifest", help="lecture manifest (TSV)")
    p.add_argument("--workspace", help="workspace directory for stage outputs")
    p.add_argument("--backend", choices=("mock", "remote", "cache"), help="embedding backend")
    p.add_argument("--endpoint", help="embedding service URL (remote backend)")
    p.add_argument("--model-id", dest="model_id", help="embedding model id (cache key component)")
    p.add_argument("--dimension", type=int, help="embedding dimension")
    p.add_argument("--batch-size", type=int, dest="batch_size", help="embedding batch size")
    p.add_argument("--max-merge", type=int, dest="max_merge", help="largest 1-n / n-1 merge")
    p.add_argument("--skip-cost", type=float, dest="skip_cost", help="per-sentence skip penalty")
    p.add_argument("--threshold", type=float, help="minimum link score to keep a pair")
    p.add_argument("--band", type=int, help="coarse-to-fine band width")
    p.add_argument("--format", choices=("jsonl", "tsv"), help="export format")
    p.add_argument("--test-top-k", type=int, dest="test_top_k", help="test pairs per language pair")
    p.add_argument("--jobs", type=int, help="document-level parallelism (default: logical cores)")
    p.add_argument("--pattern-set", dest="pattern_set", help="artifact pattern set (YAML)")
    p.add_argument("--seed-map", dest="seed_map", help="mock-backend seed map (YAML)")
    p.add_argument("--holdout", help="comma-separated held-out lecture ids")
    p.add_argument("--report", help="write the stage report as JSON to this path")
    p.add_argument("--print-config", action="store_true", help="show the effective config and exit")


_OVERRIDE_KEYS = (
    "manifest",
    "workspace",
    "backend",
    "endpoint",
    "model_id",
    "dimension",
    "batch_size",
    "max_merge",
    "skip_cost",
    "threshold",
    "band",
    "format",
    "test_top_k",
    "jobs",
    "pattern_set",
    "seed_map",
    "holdout",
)


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(asctime)s %(levelname)s %(message)s",
        datefmt="%H:%M:%S",
    )
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.version:
        from . import __version__

        print(__version__)
        return EXIT_OK
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG

    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    try:
        config = load_config(args.config, overrides)
    except ConfigInvalid as exc:
        logging.getLogger("bitextmine").error("invalid configuration: %s", exc)
        return EXIT_CONFIG

    if args.print_config:
        print(json.dumps(describe(config), indent=2, sort_keys=True))
        return EXIT_OK

    try:
        if args.command == "run-all":
            pipeline = run_all(config)
            _maybe_write_report(args.report, pipeline.to_dict())
            return EXIT_RUNTIME if pipeline.fatal else EXIT_OK
        report = run_stage(args.command, config)
        _maybe_write_report(args.report, report.to_dict())
        return EXIT_OK
    except ConfigInvalid as exc:
        logging.getLogger("bitextmine").error("invalid configuration: %s", exc)
        return EXIT_CONFIG
    except PipelineError as exc:
        logging.getLogger("bitextmine").error("%s: %s", type(exc).__name__, exc)
        return EXIT_RUNTIME


def _maybe_write_report(path: str | None, payload: dict) -> None:
    if path:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(
            json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )


if __name__ == "__main__":
    sys.exit(main())
