"""Command line entry point: ``berezin run <config> [options]``.

Exit codes: 0 all checks pass, 1 at least one check failed, 2 usage or
configuration error.  The default output directory is taken from --out,
then the config, then $BEREZIN_OUT, then ./berezin-out.
"""

from __future__ import annotations

import argparse
import os
import sys

from .config import ConfigError, load_config
from .geometry import ModelError
from .report import emit_report
from .suites import run_suite

ENV_OUT = "BEREZIN_OUT"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="berezin",
                                     description="verification suites for the quantization workbench")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a verification suite from a config file")
    run.add_argument("config", help="path to the YAML experiment config")
    run.add_argument("--suite", help="override the suite named in the config")
    run.add_argument("--out", help="output directory for report files")
    run.add_argument("--order", type=int, help="override the formal series order")
    run.add_argument("--quiet", action="store_true", help="suppress the console summary")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except (OSError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.order is not None:
        cfg.order = args.order
        if cfg.order >= 3 and not args.quiet:
            print("note: order >= 3 multiplies the formal-suite cost", file=sys.stderr)
    out_dir = args.out or cfg.output_dir or os.environ.get(ENV_OUT) or "berezin-out"
    try:
        report = run_suite(cfg, args.suite)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        paths = emit_report(report, out_dir)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if not args.quiet:
        with open(paths["summary"]) as fh:
            print(fh.read(), end="")
        print(f"report: {paths['report']}")
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
