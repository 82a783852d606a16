"""Command line entry point ``onebit-mimo``.

Exit codes: 0 on success, 2 on configuration errors, 3 on numerical failures,
1 on I/O errors.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from .bounds import BIAS_ESTIMATORS
from .config import ESTIMATORS, ConfigError, resolve_config

EXIT_OK, EXIT_IO, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

COMMANDS = {
    "mse": "NMSE versus SNR of the channel estimators",
    "ser": "symbol error rate of the sliding-window detector",
    "convergence": "LRA-LMS NMSE versus pilot length",
    "bounds": "Bayesian Cramer-Rao bound versus SNR",
    "complexity": "closed-form operation counts versus receive antennas",
    "power": "receiver power versus ADC resolution",
    "bias-check": "bias diagnostics of the low-resolution-aware estimators",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", metavar="PATH", help="key = value configuration file")
    p.add_argument("--seed", type=int, help="unsigned 64-bit master seed")
    p.add_argument("--out", metavar="DIR", help="output directory (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--preset", choices=("paper", "quick"))
    p.add_argument("--m", metavar="LIST", help="oversampling factors, e.g. 1,2,3")
    p.add_argument("--rho", type=float, help="receive correlation magnitude")
    p.add_argument("--estimators", metavar="LIST", help="comma-separated estimator names")
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="onebit-mimo", description="One-bit oversampled massive MIMO channel estimation experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common()
    for name, help_text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def _split(text: str | None) -> tuple | None:
    if text is None:
        return None
    items = tuple(s.strip() for s in text.split(",") if s.strip())
    if not items:
        raise ConfigError("empty list")
    return items


def _config(args):
    overrides = {"seed": args.seed, "rho_mag": args.rho, "trials": args.trials, "workers": args.workers}
    if args.m is not None:
        grid = _split(args.m)
        overrides["m_grid"] = ",".join(grid)
        overrides["m"] = grid[0]
    names = _split(args.estimators)
    if names is not None and args.command in ("mse",):
        overrides["estimators"] = ",".join(names)
    return resolve_config(args.preset, args.config, overrides), names


def _run(args):
    cfg, names = _config(args)
    cmd = args.command
    if cmd == "mse":
        return harness.run_mse_sweep(cfg)
    if cmd == "ser":
        if names:
            bad = [n for n in names if n != "perfect" and n not in ESTIMATORS]
            if bad:
                raise ConfigError(f"unknown CSI source(s) {bad}; choose from perfect, {', '.join(ESTIMATORS)}")
        return harness.run_ser_sweep(cfg, names)
    if cmd == "convergence":
        return harness.run_convergence(cfg)
    if cmd == "bounds":
        return harness.run_bounds(cfg)
    if cmd == "complexity":
        return harness.run_costs(cfg)
    if cmd == "power":
        return harness.run_power(cfg)
    if names:
        bad = [n for n in names if n not in BIAS_ESTIMATORS]
        if bad:
            raise ConfigError(f"unknown bias estimator(s) {bad}; choose from {', '.join(BIAS_ESTIMATORS)}")
    return harness.run_bias_check(cfg, names)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        result = _run(args)
        if args.out is None:
            text = harness.to_csv(result) if args.format == "csv" else harness.to_json(result)
            sys.stdout.write(text)
        else:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            path = harness.emit(result, args.format, out)
            print(path)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError, ZeroDivisionError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
