"""Command-line entry point.

    hemopipe <ingest|segment|split|train|evaluate|compare|reproduce>
             --config PATH [--out DIR] [--seed N] [--dry-run]

Every subcommand is driven by one experiment config file.  Stages write into
``<out>/run_<confighash12>/``, so rerunning an identical config reproduces
the same artifact tree.  Exit codes: 0 success, 1 stage failure, 2 bad config.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import ConfigError, HemopipeError
from .pipeline import STAGES, StageFailure, reproduce, run_paths, run_stage


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hemopipe",
        description="Blood-smear leukemia classification pipeline",
    )
    parser.add_argument("--version", action="version", version=f"hemopipe {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("ingest", "discover and merge the source datasets into manifests"),
        ("segment", "apply HSV segmentation to the merged manifest"),
        ("split", "assign stratified train/val/test splits"),
        ("train", "fine-tune every configured backbone run"),
        ("evaluate", "score best checkpoints on val and test splits"),
        ("compare", "render the cross-model comparison table"),
        ("reproduce", "run all stages end to end"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path, help="experiment config YAML")
        p.add_argument("--out", type=Path, default=None, help="output root (overrides config out_dir)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--dry-run", action="store_true", help="validate config and print the plan")
    return parser


def _print_plan(command: str, cfg, paths) -> None:
    stages = STAGES if command == "reproduce" else (command,)
    print(f"config hash: {cfg.config_hash()}")
    print(f"seed: {cfg.seed}")
    print(f"output: {paths.root}")
    print(f"stages: {' -> '.join(stages)}")
    for run in cfg.runs:
        print(
            f"  run {run.name}: backbone={run.backbone} weights={run.weights} "
            f"optimizer={run.optimizer} lr0={run.lr0} batch={run.batch_size} epochs={run.epochs}"
        )


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr
    )
    try:
        cfg = load_config(args.config, seed_override=args.seed, out_override=args.out)
        paths = run_paths(cfg, args.out)
    except (ConfigError, HemopipeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.dry_run:
        _print_plan(args.command, cfg, paths)
        return 0

    try:
        if args.command == "reproduce":
            root = reproduce(cfg, args.out)
            print(f"artifact tree: {root}")
        else:
            paths.root.mkdir(parents=True, exist_ok=True)
            run_stage(args.command, cfg, paths)
            print(f"stage {args.command} complete: {paths.root}")
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
