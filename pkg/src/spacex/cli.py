"""Command-line entry point.

Exit codes: 0 success, 1 analysis or validation error, 2 input error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .config import load_config
from .errors import ConfigError, InputError, SpacexError
from .fixtures import DEFAULT_SEED, build_corpus
from .forge import TOKEN_ENV, fetch_live, load_snapshot
from .ingest import IngestOptions, parse_iso_utc
from .pipeline import (
    AnalysisState,
    cmd_analyze,
    cmd_mine,
    load_histories,
    select_projects,
    stage,
    stage_identities,
)
from .report import cmd_report

logger = logging.getLogger("spacex")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", type=Path, default=default, help="run config (YAML)")
    parser.add_argument("--out", type=Path, default=default, help="output directory or file")
    parser.add_argument("--keep-going", action="store_true", default=argparse.SUPPRESS if suppress else False,
                        help="mine: skip failing repositories instead of stopping")
    parser.add_argument("--seed", type=int, default=default, help="fixtures: random seed")
    parser.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spacex", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("mine", parents=[common], help="walk local clones into commit datasets")
    p.add_argument("repos", nargs="+", type=Path)
    p.add_argument("--no-complexity", action="store_true", help="skip per-method complexity")
    p.add_argument("--follow-renames", action="store_true")
    p.add_argument("--workers", type=int, default=4)

    p = sub.add_parser("forge-fetch", parents=[common], help=f"download a forge snapshot (token in ${TOKEN_ENV})")
    p.add_argument("project", help="owner/name")
    p.add_argument("--api-root", default="https://api.github.com")

    p = sub.add_parser("forge-validate", parents=[common], help="check snapshot files against the schema")
    p.add_argument("snapshots", nargs="+", type=Path)

    for name, text in (("clean", "identity cleaning only"),
                       ("metrics", "cleaning, sentiment, metrics and communication datasets"),
                       ("analyze", "full pipeline including models and CPS"),
                       ("cps", "metrics plus composite scores, without models")):
        sub.add_parser(name, parents=[common], help=text)

    p = sub.add_parser("report", parents=[common], help="render report.md and plot CSVs from a bundle")
    p.add_argument("bundle", type=Path)
    p.add_argument("--figures", action="store_true", help="also draw PNG charts (needs matplotlib)")

    sub.add_parser("fixtures", parents=[common], help="write the synthetic test corpus")

    p = sub.add_parser("select", parents=[common], help="apply the corpus selection filter")
    p.add_argument("--as-of", help="ISO-8601 date closing the trailing window (default: newest commit)")
    p.add_argument("--months", type=int, default=6)
    p.add_argument("--min-contributors", type=int, default=3)
    p.add_argument("--max-contributors", type=int, default=10)
    return parser


def _need_config(args) -> Path:
    if not args.config:
        raise ConfigError(f"{args.command} needs --config")
    return args.config


def run(args: argparse.Namespace) -> int:
    command = args.command
    if command == "mine":
        if not args.out:
            raise ConfigError("mine needs --out")
        opts = IngestOptions(compute_complexity=not args.no_complexity, follow_renames=args.follow_renames)
        manifest, errors = cmd_mine(args.repos, args.out, keep_going=args.keep_going, workers=args.workers, opts=opts)
        for err in errors:
            print(f"warning: skipped {err}", file=sys.stderr)
        print(manifest)
        return 0
    if command == "forge-fetch":
        token = os.environ.get(TOKEN_ENV)
        out = args.out or Path(args.project.replace("/", "_") + ".json")
        snap = fetch_live(args.project, token, out, api_root=args.api_root)
        print(f"{out}: {len(snap.pull_requests)} pull requests, {len(snap.issues)} issues, {len(snap.ci_runs)} CI runs")
        return 0
    if command == "forge-validate":
        for path in args.snapshots:
            snap = load_snapshot(path)
            print(f"{path}: ok ({snap.project_name}: {len(snap.pull_requests)} pull requests, "
                  f"{len(snap.issues)} issues, {len(snap.ci_runs)} CI runs)")
        return 0
    if command in ("clean", "metrics", "analyze", "cps"):
        config = load_config(_need_config(args), out_dir=args.out)
        print(cmd_analyze(config, until=command))
        return 0
    if command == "report":
        print(cmd_report(args.bundle, args.out, figures=args.figures))
        return 0
    if command == "fixtures":
        if not args.out:
            raise ConfigError("fixtures needs --out")
        seed = DEFAULT_SEED if args.seed is None else args.seed
        print(build_corpus(args.out, seed=seed))
        return 0
    if command == "select":
        config = load_config(_need_config(args))
        state = AnalysisState(config)
        with stage("load"):
            state.histories = load_histories(config)
        with stage("identities"):
            stage_identities(state)
        as_of = parse_iso_utc(args.as_of) if args.as_of else None
        rows = select_projects(state.histories, state.kept, as_of, args.min_contributors,
                               args.max_contributors, args.months)
        print(json.dumps(rows, indent=2))
        return 0
    raise InputError(f"unknown command {command}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except SpacexError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
