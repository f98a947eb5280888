"""Benchmark table on 11 shapes: every estimator over three densities and five noise levels.

Writes rows.csv, table.csv (estimator x density by sigma2, mean and std over seeds),
table_sq.csv, long.csv and the rest of the sweep outputs to --out.
"""

import argparse
import os

from fmsync.experiment import ESTIMATORS, ExperimentConfig, run_sweep


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default="results/table1")
    args = p.parse_args()
    config = ExperimentConfig(
        n=20,
        num_nodes=11,
        densities=(1.0, 0.833, 0.667),
        sigmas2=(0.2, 0.4, 0.6, 0.8, 1.0),
        estimators=ESTIMATORS,
        seeds=tuple(range(args.seeds)),
        workers=args.workers,
        output_dir=args.out,
    )
    outcome = run_sweep(config)
    print(outcome.files["table"].read_text())
    if not outcome.ok:
        print(f"{len(outcome.failures)} estimator runs failed; see manifest.json")


if __name__ == "__main__":
    main()
