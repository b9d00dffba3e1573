"""Command-line entry point: ``ness-lab <command> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .exceptions import ConfigError
from .harness import COMMANDS, EXIT_CONFIG, OUT_ENV, default_config_path, load_config, run_command

_HELP = {
    "steady": "stationary profiles on every grid",
    "fluct": "linearized generator and noise spectra, dissipativity report",
    "corr": "stationary covariance W, remainder R and the range verdict",
    "phi": "Phi table and range verdict",
    "simulate": "sample the fluctuation process, compare with W",
    "ssep": "lattice gas run and micro/macro comparison",
    "verify": "full pipeline with the pass/fail acceptance table",
}


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _grids(text):
    try:
        sizes = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not sizes or min(sizes) < 1:
        raise argparse.ArgumentTypeError("need at least one positive grid size")
    return sizes


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ness-lab",
        description="Long-range correlations in boundary-driven diffusive systems.",
        epilog=f"Output root: --out, else ${OUT_ENV}, else [output].dir of the config.",
    )
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sp = sub.add_parser(name, help=_HELP[name], description=_HELP[name])
        sp.add_argument("--config", metavar="PATH",
                        help="TOML run config (default: bundled SSEP config)")
        sp.add_argument("--out", metavar="DIR", help="output root directory")
        sp.add_argument("--seed", type=_u64, metavar="U64", help="override the config seed")
        sp.add_argument("--grids", type=_grids, metavar="LIST",
                        help='override grid sizes, e.g. "16,32,64,128"')
        sp.add_argument("--quiet", action="store_true", help="only report errors")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config or default_config_path())
        if args.seed is not None:
            cfg = dataclasses.replace(cfg, seed=args.seed)
        if args.grids is not None:
            cfg = dataclasses.replace(cfg, grid={"sizes": args.grids})
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    code, run = run_command(args.command, cfg, args.out)
    if not args.quiet:
        for g in run.gates:
            print(f"{'PASS' if g.passed else 'FAIL'}  {g.name:32s} {g.value:.6g} "
                  f"(threshold {g.threshold:.6g})")
        print(f"manifest: {run.path('manifest.json')}")
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
