"""Command-line entry point: subcommands mirror the scenarios.

Exit status: 0 for a completed run (any verdict, including BLOWUP),
2 for configuration errors, 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from .config import parse_config, SCENARIOS
from .errors import ConfigurationError
from .grid import set_fft_workers
from .scenarios import run_scenario

_USAGE_NOTE = (
    "the scenario in the config file must match the subcommand; "
    "use 'pkshear <scenario> --config FILE'"
)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", required=True, help="path to the run config file")
    sub.add_argument("--output", default=None, help="override the output directory")
    sub.add_argument("--threads", type=int, default=1, help="FFT worker threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pkshear",
        description="Sheared chemotaxis-fluid simulator and diagnostics",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    for name in SCENARIOS:
        sub = subs.add_parser(name, help=f"run the {name} scenario", epilog=_USAGE_NOTE)
        _add_common(sub)
        if name == "full-run":
            sub.add_argument("--resume", default=None,
                             help="checkpoint file to continue from")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = parse_config(fh.read())
        if cfg.scenario != args.command:
            raise ConfigurationError(
                f"config declares scenario {cfg.scenario!r} but the "
                f"{args.command!r} subcommand was invoked"
            )
        if args.output is not None:
            cfg = dataclasses.replace(cfg, output_dir=args.output)
        set_fft_workers(args.threads)
        result = run_scenario(cfg, resume=getattr(args, "resume", None))
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    if cfg.scenario == "check-lemmas":
        print(result.to_text())
        if not result.all_exact_pass:
            print("exact identity check failed", file=sys.stderr)
            return 1
    elif cfg.scenario == "full-run":
        print(f"verdict: {result.verdict} at t = {result.t_final:.6g} "
              f"(max |n|_inf = {result.max_n_linf:.6g})")
    elif cfg.scenario == "linear-decay":
        for row in result.rows:
            print(f"A = {row['A']:g}: lambda_qnz = {row['lambda_qnz']:.6g}, "
                  f"lambda_qz = {row['lambda_qz']:.6g}, "
                  f"oracle rel err = {row['oracle_rel_err']:.3e}")
        print(f"fitted scaling exponent (q != 0 class): {result.slope_qnz:.4f}")
    elif cfg.scenario == "twod-critical":
        for mass, verdict in result.verdicts:
            print(f"mass = {mass:.6g}: {verdict}")
    elif cfg.scenario == "sweep-A":
        for row in result.rows:
            print(f"A = {row['A']:g}: {row['verdict']} "
                  f"(max |n|_inf = {row['max_n_linf']:.6g})")
        print(f"threshold interval: ({result.threshold_low}, {result.threshold_high})"
              + (" NONMONOTONE" if result.nonmonotone else ""))
    return 0


if __name__ == "__main__":
    sys.exit(main())
