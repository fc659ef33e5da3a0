"""Run every experiment preset and write one CSV per experiment.

    python3 scripts/reproduce_figures.py --out results --trials 20000
"""

import argparse
import logging
import time
from pathlib import Path

from ncjt import experiments


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results", help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, help="Monte Carlo trials per point (preset default if omitted)")
    p.add_argument("--only", nargs="+", choices=experiments.EXPERIMENTS, help="subset of experiments")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in args.only or experiments.EXPERIMENTS:
        start = time.perf_counter()
        spec = experiments.preset(name, seed=args.seed, trials=args.trials)
        result = experiments.execute(spec)
        path = out / f"{name}.csv"
        path.write_text(result.to_text())
        errors = sum(bool(r.error) for r in result.rows)
        logging.info("%-18s %4d rows (%d error rows) -> %s  %.1fs",
                     name, len(result.rows), errors, path, time.perf_counter() - start)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
