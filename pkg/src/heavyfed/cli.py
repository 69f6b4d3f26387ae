"""Command-line experiment runner.

Exit codes: 0 success, 1 config error, 2 every repetition diverged.
"""

from __future__ import annotations

import argparse
import sys

from .config import echo_config, parse_config
from .errors import ConfigError
from .runner import run_experiment, sweep

AXES = ("alpha", "N", "m", "sigma_x", "compressor")


def _parse_values(axis, text):
    items = [v.strip() for v in text.split(",") if v.strip()]
    if not items:
        raise ConfigError("values", "no axis values given")
    try:
        if axis in ("alpha", "sigma_x"):
            return [float(v) for v in items]
        if axis in ("N", "m"):
            return [int(v) for v in items]
    except ValueError as exc:
        raise ConfigError("values", str(exc)) from None
    return items


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="heavyfed",
        description="Byzantine-resilient gradient descent on heavy-tailed data, simulated at desk scale.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--out", help="output directory (overrides the config's out_dir)")

    p_sweep = sub.add_parser("sweep", help="repeat the experiment across one axis")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--axis", required=True, choices=AXES)
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    p_sweep.add_argument("--out")

    p_validate = sub.add_parser("validate", help="check a config file and echo resolved values")
    p_validate.add_argument("config")

    args = parser.parse_args(argv)
    try:
        config = parse_config(args.config)
        if args.command == "validate":
            print(echo_config(config))
            return 0
        if args.command == "run":
            summaries = [run_experiment(config, args.out)]
        else:
            values = _parse_values(args.axis, args.values)
            summaries = sweep(config, args.axis, values, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    if all(not s.completed for s in summaries):
        print("all repetitions diverged", file=sys.stderr)
        return 2
    for s in summaries:
        tag = f"{s.axis}={s.axis_value} " if s.axis else ""
        loss = "n/a" if s.final_loss_mean is None else f"{s.final_loss_mean:.6g}"
        print(f"{tag}final_loss_mean={loss} failed={len(s.failed)}/{s.repetitions} bytes={s.total_bytes}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
