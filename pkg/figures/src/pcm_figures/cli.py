"""Command-line front end: one subcommand per plot.

Exit codes: 0 success, 2 bad input, 3 I/O failure. Output format follows
the --out extension (.png or .svg); both are byte-deterministic for
identical inputs.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .plots import (FigureInputError, plot_errcurve, plot_histogram,
                    plot_homogeneity, plot_subpopulations)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcm-figures",
        description="Render figures from pcm output files.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("subpopulations",
                       help="d=2 scatter colored by assigned level")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--assignments", required=True, help="assignments CSV")
    p.add_argument("--out", required=True, help="output image (.png/.svg)")
    p.set_defaults(func=lambda a: plot_subpopulations(a.data, a.assignments,
                                                      a.out))

    p = sub.add_parser("histogram", help="smoothed-effect histogram")
    p.add_argument("--histogram", required=True, help="histogram CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=lambda a: plot_histogram(a.histogram, a.out))

    p = sub.add_parser("homogeneity", help="homogeneity vs. subject count")
    p.add_argument("--summary", required=True, help="sweep summary CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=lambda a: plot_homogeneity(a.summary, a.out))

    p = sub.add_parser("errcurve", help="clustering error vs. group count")
    p.add_argument("--report", required=True, help="fit report JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=lambda a: plot_errcurve(a.report, a.out))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
        return 0
    except (FigureInputError, KeyError, ValueError) as exc:
        print(f"pcm-figures: bad input: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"pcm-figures: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
