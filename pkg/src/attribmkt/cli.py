"""Command line entry point: ``attribmkt <experiment> [--config F] [--out D] [--seed N] [--svg]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from .config import KINDS, ConfigError, default_config, load_config
from .experiments import run_experiment
from .pricing import ConvergenceError

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

HELP = {
    "price-eq": "price equilibria of one market under all regimes",
    "design-monopoly": "closed-form monopoly design",
    "design-competition": "symmetric and exclusive competitive designs",
    "br-sim": "best-response design simulation over several seeds",
    "welfare-grid": "consumer surplus grids over (c, phi) and (B, gamma)",
    "rho-grid": "optimal attribute overlap with two consumer types",
    "rotation-demo": "Givens pair-angle recovery on simulated data",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attribmkt", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind, help=HELP[kind])
        p.add_argument("--config", help="INI file; defaults are used when omitted")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, default=0, help="base random seed (default 0)")
        p.add_argument("--svg", action="store_true", help="also write SVG heatmaps")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed < 0 or args.seed >= 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INVALID
    try:
        cfg = load_config(args.config) if args.config else default_config(args.command)
        if cfg.kind != args.command:
            raise ConfigError(f"config is for {cfg.kind!r}, not {args.command!r}")
        svg = True if args.svg else None
        files = run_experiment(cfg, args.out, args.seed, svg)
    except (ConvergenceError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    for path in files:
        print(path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
