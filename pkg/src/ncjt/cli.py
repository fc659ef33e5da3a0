"""Command line entry point: one subcommand per experiment.

    python3 -m ncjt <experiment> [--config spec.json] [--seed N] [--trials N] [--out PATH]
                                 [--alpha A] [--lambda L] [--r0 R] [--snr0-db S]
                                 [--na N] [--np N] [--gamma-db G]

Exit codes: 0 success, 2 invalid spec or flags, 3 numerical failure.
The Monte Carlo worker count comes from the NCJT_WORKERS environment variable.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from . import experiments
from .analytic import QuadratureError
from .config import ConfigError
from .estimator import SingularGramError
from .experiments import ExperimentSpec, SpecError

EXIT_OK, EXIT_SPEC, EXIT_NUMERIC = 0, 2, 3

# flag -> (key in ``fixed``, series list it replaces with a single value)
_OVERRIDES = {
    "alpha": ("alpha", "alphas"),
    "lam": ("lam", None),
    "r0": ("r0", None),
    "snr0_db": ("snr0_db", "snr0_dbs"),
    "na": ("n_a", "n_as"),
    "np": ("n_p", None),
    "gamma_db": ("gamma_db", "gamma_dbs"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_SPEC)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ncjt", description="Reproduce NCJT design curves as CSV.")
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name in experiments.EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON experiment spec; flags override its values")
        p.add_argument("--seed", type=int)
        p.add_argument("--trials", type=int)
        p.add_argument("--out", help="output CSV path (default: standard output)")
        p.add_argument("--alpha", type=float)
        p.add_argument("--lambda", dest="lam", type=float)
        p.add_argument("--r0", type=float, help="reference distance (default 0.08/(2 sqrt(lambda)))")
        p.add_argument("--snr0-db", dest="snr0_db", type=float)
        p.add_argument("--na", type=int)
        p.add_argument("--np", type=int)
        p.add_argument("--gamma-db", dest="gamma_db", type=float)
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def spec_from_args(args) -> ExperimentSpec:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise SpecError("config file must hold a JSON object")
        data.setdefault("experiment", args.experiment)
        if data["experiment"] != args.experiment:
            raise SpecError(f"experiment: config says {data['experiment']!r}, subcommand is {args.experiment!r}")
        base = experiments.preset(args.experiment)
        data.setdefault("sweep", base.sweep)
        spec = ExperimentSpec.from_dict(data)
    else:
        spec = experiments.preset(args.experiment)
    if args.seed is not None:
        spec.seed = args.seed
    if args.trials is not None:
        spec.trials = args.trials
    if args.out is not None:
        spec.output_path = args.out
    sweep_name = spec.sweep.get("name") if isinstance(spec.sweep, dict) else None
    for flag, (key, series_key) in _OVERRIDES.items():
        value = getattr(args, flag)
        if value is None:
            continue
        if key == sweep_name:
            spec.sweep = {"name": key, "grid": [value]}
            continue
        spec.fixed[key] = value
        if series_key and series_key in experiments.PRESETS[spec.experiment]["series"]:
            spec.series[series_key] = [value]
    if args.lam is not None and args.r0 is None and args.config is None:
        spec.fixed.pop("r0", None)
    return spec


def _summary(out) -> str:
    errors = sum(1 for r in out.rows if r.error)
    return f"{out.spec.experiment}: {len(out.rows)} rows ({errors} error rows)"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        spec = spec_from_args(args)
        spec = experiments.resolve(spec)
    except (SpecError, ConfigError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"ncjt: invalid spec: {exc}", file=sys.stderr)
        return EXIT_SPEC
    try:
        out = experiments.execute(spec)
    except (QuadratureError, SingularGramError, np.linalg.LinAlgError, FloatingPointError, RuntimeError) as exc:
        print(f"ncjt: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ConfigError as exc:
        print(f"ncjt: invalid spec: {exc}", file=sys.stderr)
        return EXIT_SPEC
    if spec.output_path:
        print(_summary(out))
    else:
        sys.stdout.write(out.to_text())
    return EXIT_OK
