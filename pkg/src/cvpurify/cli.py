"""Command-line entry point: ``cvpurify <experiment> [options]``.

Exit codes: 0 success, 2 configuration error, 3 runtime or capacity error.
"""

from __future__ import annotations

import argparse
import sys
from typing import Sequence

from . import __version__
from .config import EXPERIMENTS, SCHEMA, ConfigError, default_for, keys_for, parse_config
from .experiments import run
from .fock import FockError
from .output import emit_all, format_value
from .state_gen import ConvergenceError

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _epilog() -> str:
    lines = ["experiment keys (use --set key=value):"]
    for name in EXPERIMENTS:
        keys = ", ".join(f"{k}={format_value(default_for(name, k))}" for k in keys_for(name))
        lines.append(f"  {name}: {keys}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvpurify",
                     description="Entanglement concentration and QND readout experiments.",
                     epilog=_epilog(), formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("experiment", choices=list(EXPERIMENTS))
    parser.add_argument("--config", metavar="FILE", help="INI file with [common] and per-experiment sections")
    parser.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a parameter (repeatable; wins over --config)")
    parser.add_argument("--out", default=".", metavar="DIR", help="output directory (default: .)")
    parser.add_argument("--seed", type=int, help="master seed (default: 0)")
    parser.add_argument("--format", default="csv", choices=("csv", "tsv"))
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.experiment, args.config, args.overrides, seed=args.seed,
                           output_dir=args.out, fmt=args.format)
    except ConfigError as exc:
        print(f"cvpurify: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        tables = run(cfg)
        header = {"experiment": cfg.experiment, "seed": cfg.seed, "version": __version__}
        paths = emit_all(tables, cfg.output_dir, cfg.format, config=cfg.parameters,
                         header=header, gnuplot=bool(cfg.parameters.get("gnuplot", False)))
    except (FockError, ConvergenceError, ValueError, OSError) as exc:
        print(f"cvpurify: {args.experiment} failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in paths:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
