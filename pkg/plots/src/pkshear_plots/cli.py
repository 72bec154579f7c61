"""pkshear-plots: render figures from simulator CSV outputs."""

from __future__ import annotations

import argparse
import sys

from .csvio import SchemaError
from .render import plot_energy_timeseries, plot_rate_scaling, plot_sweep_threshold


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pkshear-plots",
        description="Batch figures from pkshear CSV outputs (headless)",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("energy", "E(t) / sup|n| / mass time series with hypothesis bands"),
        ("rates", "decay-rate scaling fit with -1/3 guide"),
        ("sweep", "verdict-vs-amplitude chart with threshold interval"),
    ):
        sub = subs.add_parser(name, help=help_)
        sub.add_argument("csv", help="input CSV (not modified)")
        sub.add_argument("out", help="output image path (png/pdf/svg)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "energy":
            plot_energy_timeseries(args.csv, args.out)
        elif args.command == "rates":
            slope = plot_rate_scaling(args.csv, args.out)
            print(f"fitted slope: {slope:.4f}")
        elif args.command == "sweep":
            plot_sweep_threshold(args.csv, args.out)
    except (SchemaError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
