"""Command-line entry points.

Subcommands:

    check-model   PBH structural tests plus linearization verification
    simulate      one trial, writes trajectory.csv and metrics.csv
    montecarlo    full study, per-trial CSVs plus summary.csv
    version       print the package version

Exit codes: 0 success, 1 configuration or usage error, 2 model-check
failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from .. import __version__
from ..lti import pbh_detectable, pbh_stabilizable, sqrtm_psd
from ..quadcopter import build_linear_model, verify_linearization
from .config import ConfigError, ExperimentConfig, default_config, load_config
from .runner import (
    run_montecarlo,
    run_trial,
    write_metrics_csv,
    write_outputs,
    write_trajectory_csv,
)

__all__ = ["cli_main", "main"]

LINEARIZATION_TOL = 1e-6


class _Parser(argparse.ArgumentParser):
    """argparse variant that exits 1 (not 2) on usage errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _add_common(parser: _Parser) -> None:
    parser.add_argument("--config", metavar="PATH",
                        help="TOML experiment file (defaults: paper scenario)")
    parser.add_argument("--out", metavar="DIR", default="out",
                        help="output directory (default: out)")
    parser.add_argument("--seed", type=int, metavar="INT",
                        help="override master_seed")
    parser.add_argument("--trials", type=int, metavar="INT",
                        help="override trial count")
    parser.add_argument("--mode", choices=("rhso", "hso"),
                        help="override observer mode")
    parser.add_argument("--layout", choices=("full", "sparse"),
                        help="override weight layout")


def build_parser() -> _Parser:
    parser = _Parser(prog="irlpilot",
                     description="Inverse-RL pilot cost recovery in simulation")
    # subparsers inherit _Parser, so usage errors exit 1 there too
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    for name, help_text in (
        ("check-model", "verify PBH conditions and the linearization"),
        ("simulate", "run a single trial and write its CSVs"),
        ("montecarlo", "run the full repeated-trial study"),
        ("version", "print the package version"),
    ):
        p = sub.add_parser(name, help=help_text)
        if name != "version":
            _add_common(p)
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else default_config()
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    if args.trials is not None:
        cfg = dataclasses.replace(cfg, trials=args.trials)
    if args.mode is not None:
        cfg = dataclasses.replace(
            cfg, observer=dataclasses.replace(cfg.observer, mode=args.mode))
    if args.layout is not None:
        cfg = dataclasses.replace(
            cfg, observer=dataclasses.replace(cfg.observer, layout=args.layout))
    return cfg


def _cmd_check_model(args) -> int:
    cfg = _load(args)
    system = build_linear_model(cfg.quad)
    cost = cfg.cost.to_cost()
    stab = pbh_stabilizable(system)
    det = pbh_detectable(system.a_matrix, sqrtm_psd(cost.q_matrix))
    report = verify_linearization(cfg.quad)
    ok = stab and det and report.passed(LINEARIZATION_TOL)
    print(f"stabilizable: {stab}")
    print(f"detectable: {det}")
    print(f"linearization max |A_fd - A|: {report.max_a_error:.3e}")
    print(f"linearization max |B_fd - B|: {report.max_b_error:.3e}")
    print(f"model check: {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 2


def _cmd_simulate(args) -> int:
    cfg = _load(args)
    record = run_trial(cfg, trial_index=0)
    os.makedirs(args.out, exist_ok=True)
    write_trajectory_csv(record, os.path.join(args.out, "trajectory.csv"))
    write_metrics_csv(record, os.path.join(args.out, "metrics.csv"))
    f = record.final
    print(f"trial 0 seed {record.seed} diverged={record.diverged}")
    print(f"final: |delta|={f.delta_norm:.6e} gain_error={f.gain_error:.6e} "
          f"q_error={f.q_error:.6e} r_error={f.r_error:.6e}")
    print(f"wrote {args.out}/trajectory.csv and {args.out}/metrics.csv")
    return 0


def _cmd_montecarlo(args) -> int:
    cfg = _load(args)
    result = run_montecarlo(cfg)
    write_outputs(result, args.out)
    s = result.summary
    print(f"trials: {s.trials}  diverged: {s.diverged_count}")
    print(f"mean final gain error: {s.mean_gain_error:.6e}")
    print(f"variance of final gain error: {s.var_gain_error:.6e}"
          + ("  (single sample)" if s.single_sample else ""))
    print(f"wrote per-trial CSVs and summary.csv under {args.out}/")
    return 0


def cli_main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    if args.command == "version":
        print(__version__)
        return 0
    try:
        if args.command == "check-model":
            return _cmd_check_model(args)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "montecarlo":
            return _cmd_montecarlo(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    return 1


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
