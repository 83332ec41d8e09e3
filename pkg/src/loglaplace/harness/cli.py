"""Command-line entry point: ``loglaplace <experiment> [flags]``."""

from __future__ import annotations

import argparse
import sys

from ..errors import LogLaplaceError
from .config import EXPERIMENTS, ExperimentConfig
from .experiments import RUNNERS


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat YAML file; flags override its values")
    p.add_argument("--model", help="preset, e.g. CONST or SMOOTH:c0=0.5,b0=0.1")
    p.add_argument("--grid-n", dest="grid_n", type=int, help="number of grid cells")
    p.add_argument("--domain", type=float, help="half width L of the domain [-L, L]")
    p.add_argument("--h", type=float, help="grid spacing when the cell count is automatic")
    p.add_argument("--dt", type=float, help="environment path step")
    p.add_argument("--t", type=float, help="final time")
    p.add_argument("--seed", type=int)
    p.add_argument("--reps", type=int, help="replicas (branching runs or sweep paths)")
    p.add_argument("--particles", type=int, nargs="+", help="particle count(s) n")
    p.add_argument("--paths", type=int, help="environment paths to average over")
    p.add_argument("--fk-samples", dest="fk_samples", type=int)
    p.add_argument("--eps", type=float, nargs="+", help="Wong-Zakai block lengths, descending")
    p.add_argument("--effect-floor", dest="effect_floor", type=float)
    p.add_argument("--out", help="output directory for report.json and CSVs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loglaplace", description=__doc__)
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        _add_common(sub.add_parser(name, help=RUNNERS[name].__doc__.splitlines()[0]))
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    flags = {k: v for k, v in vars(args).items() if k not in ("config", "experiment")}
    return cfg.with_overrides(experiment=args.experiment, **flags).resolve()


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        report = RUNNERS[cfg.experiment](cfg)
    except LogLaplaceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(report.summary())
    print(f"report written to {report.write(cfg.out)}")
    return 1 if report.failed else 0


if __name__ == "__main__":
    sys.exit(main())
