"""Command-line harness: ``fmsync generate | estimate | sample | sweep | report``.

Settings come from an optional JSON config file (the ExperimentConfig fields)
overridden by flags. ``--out`` beats the ``OUTPUT_DIR`` environment variable,
which beats the config file.

Exit codes: 0 success, 1 invalid input, 2 partial failure (manifest written),
3 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

from fmsync import io
from fmsync.energy import Cost, EnergyConfig
from fmsync.experiment import (
    ESTIMATORS,
    Cell,
    ExperimentConfig,
    cells,
    generate_cell,
    run_cell,
    run_sweep,
    table_rows,
    write_csv,
    ROW_FIELDS,
)
from fmsync.sampler import run_chain

EXIT_OK, EXIT_INVALID, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file with ExperimentConfig fields")
    common.add_argument("--n", type=int, help="basis size")
    common.add_argument("--nodes", type=int, help="number of shapes (graph nodes)")
    common.add_argument("--density", type=float, nargs="+", help="edge densities")
    common.add_argument("--sigma2", type=float, nargs="+", help="noise variances")
    common.add_argument("--estimator", nargs="+", choices=ESTIMATORS, help="estimators to run")
    common.add_argument("--seed", type=int, nargs="+", help="base seeds")
    common.add_argument("--samples", type=int, help="posterior samples per chain")
    common.add_argument("--step-size", type=float, help="Langevin step size")
    common.add_argument("--beta", type=float, help="inverse temperature")
    common.add_argument("--burn-in", type=int, help="discarded chain steps")
    common.add_argument("--thinning", type=int, help="keep every k-th chain state")
    common.add_argument("--restarts", type=int, help="optimizer restarts per MLE")
    common.add_argument("--max-iters", type=int, help="optimizer iteration cap")
    common.add_argument("--workers", type=int, help="parallel cells in a sweep")
    common.add_argument("--out", type=Path, help="output directory")

    p = argparse.ArgumentParser(prog="fmsync", description="Probabilistic synchronization of functional maps on SO(n).")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write one problem file per (nodes, density, seed) cell")
    est = sub.add_parser("estimate", parents=[common], help="run estimators on a problem file")
    est.add_argument("problem", type=Path)
    smp = sub.add_parser("sample", parents=[common], help="draw posterior samples for a problem file")
    smp.add_argument("problem", type=Path)
    smp.add_argument("--variant", choices=[c.value for c in Cost], default=Cost.EUCLIDEAN.value)
    sub.add_parser("sweep", parents=[common], help="run the full grid and write tables")
    rep = sub.add_parser("report", parents=[common], help="rebuild tables from a rows.csv")
    rep.add_argument("rows", type=Path, nargs="?", help="rows.csv (default: <out>/rows.csv)")
    return p


def build_config(args: argparse.Namespace) -> ExperimentConfig:
    d = io.load_json(args.config) if args.config else {}
    d.pop("format", None)
    d = d.get("config", d)
    flat = {
        "n": args.n,
        "num_nodes": args.nodes,
        "densities": args.density,
        "sigmas2": args.sigma2,
        "estimators": args.estimator,
        "seeds": args.seed,
        "workers": args.workers,
    }
    d.update({k: v for k, v in flat.items() if v is not None})
    sampler = dict(d.get("sampler", {}))
    for key, flag in [("num_samples", "samples"), ("step_size", "step_size"), ("beta", "beta"),
                      ("burn_in", "burn_in"), ("thinning", "thinning")]:
        if getattr(args, flag) is not None:
            sampler[key] = getattr(args, flag)
    d["sampler"] = sampler
    optimizer = dict(d.get("optimizer", {}))
    if args.restarts is not None:
        optimizer["restarts"] = args.restarts
    if args.max_iters is not None:
        optimizer["max_iters"] = args.max_iters
    d["optimizer"] = optimizer
    if os.environ.get("OUTPUT_DIR"):
        d["output_dir"] = os.environ["OUTPUT_DIR"]
    if args.out is not None:
        d["output_dir"] = str(args.out)
    return ExperimentConfig.from_dict(d)


def cmd_generate(config: ExperimentConfig) -> int:
    out = Path(config.output_dir) / "problems"
    for cell in cells(config):
        path = io.save_bundle(out / f"{cell.name}.json", generate_cell(config, cell))
        print(path)
    return EXIT_OK


def _problem_config(config: ExperimentConfig, bundle: io.ProblemBundle, args) -> ExperimentConfig:
    # the problem file fixes the instance; noise levels default to those it contains
    sigmas = args.sigma2 or sorted(bundle.observations)
    return dataclasses.replace(
        config,
        n=bundle.clean.n,
        num_nodes=bundle.clean.graph.num_nodes,
        densities=(bundle.density,),
        seeds=(bundle.seed,),
        sigmas2=tuple(sigmas),
    )


def cmd_estimate(config: ExperimentConfig, args) -> int:
    bundle = io.load_bundle(args.problem)
    config = _problem_config(config, bundle, args)
    cell = Cell(bundle.clean.graph.num_nodes, bundle.density, bundle.seed)
    out = run_cell(config, cell, bundle, keep=True)
    root = Path(config.output_dir) / "estimates"
    for (est, s2), art in sorted(out.artifacts.items()):
        stem = f"{cell.name}_{est}_s{s2!r}"
        payload = {
            "format": io.FORMAT_VERSION,
            "config": config.echo(),
            "estimator": est,
            "sigma2": s2,
            "n": bundle.clean.n,
            "maps": [[float(x) for x in m.ravel()] for m in art["state"].maps],
        }
        if "runs" in art:
            payload["runs"] = [io.result_to_dict(r) for r in art["runs"]]
        else:
            print(io.write_samples_binary(root / f"{stem}.samples.bin", art["samples"].samples))
        print(io.save_json(root / f"{stem}.json", payload))
    print(write_csv(root / f"{cell.name}_rows.csv", ROW_FIELDS, out.rows))
    return _report_failures(out.failures, root)


def cmd_sample(config: ExperimentConfig, args) -> int:
    bundle = io.load_bundle(args.problem)
    config = _problem_config(config, bundle, args)
    cell = Cell(bundle.clean.graph.num_nodes, bundle.density, bundle.seed)
    root = Path(config.output_dir) / "samples"
    # the chain starts from the constrained MLE, exactly as in a sweep
    mle_config = dataclasses.replace(config, estimators=("MLE2",))
    for s2 in config.sigmas2:
        start = run_cell(dataclasses.replace(mle_config, sigmas2=(s2,)), cell, bundle, keep=True)
        if start.failures:
            return _report_failures(start.failures, root)
        sc = dataclasses.replace(config.sampler, variant=EnergyConfig(args.variant))
        draws = run_chain(bundle.observed(s2), start.artifacts[("MLE2", s2)]["state"], sc)
        stem = f"{cell.name}_{args.variant}_s{s2!r}"
        print(io.save_json(root / f"{stem}.json", io.samples_to_dict(draws)))
        print(io.write_samples_binary(root / f"{stem}.bin", draws.samples))
    return EXIT_OK


def cmd_sweep(config: ExperimentConfig) -> int:
    outcome = run_sweep(config)
    for path in outcome.files.values():
        print(path)
    return _report_failures(outcome.failures, Path(config.output_dir))


def cmd_report(config: ExperimentConfig, args) -> int:
    rows_path = args.rows or Path(config.output_dir) / "rows.csv"
    with open(rows_path, newline="") as fh:
        records = list(csv.DictReader(fh))
    if not records:
        raise ValueError(f"{rows_path} has no rows")
    for r in records:
        for k in ("density", "sigma2", "mean_dist", "mean_dist_sq"):
            r[k] = float(r[k])
    est = tuple(dict.fromkeys(r["estimator"] for r in records))
    dens = tuple(sorted({r["density"] for r in records}, reverse=True))
    sig = tuple(sorted({r["sigma2"] for r in records}))
    config = dataclasses.replace(config, estimators=est, densities=dens, sigmas2=sig)
    fields, rows = table_rows(records, config)
    path = write_csv(Path(config.output_dir) / "table.csv", fields, rows)
    means = [f for f in fields if f.startswith("mean_")]
    print(f"{'estimator':<12}{'density':>9}" + "".join(f"{f[5:]:>9}" for f in means))
    for r in rows:
        print(f"{r['estimator']:<12}{r['density']:>9.3f}" + "".join(f"{r[f]:>9.3f}" for f in means))
    print(path)
    return EXIT_OK


def _report_failures(failures: list[dict], root: Path) -> int:
    if not failures:
        return EXIT_OK
    io.save_json(root / "failures.json", [{k: v for k, v in f.items() if k != "traceback"} for f in failures])
    for f in failures:
        print(f"failed: {f['estimator']} sigma2={f['sigma2']} seed={f['seed']}: {f['error']}", file=sys.stderr)
    return EXIT_PARTIAL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        config = build_config(args)
        if args.command == "generate":
            return cmd_generate(config)
        if args.command == "estimate":
            return cmd_estimate(config, args)
        if args.command == "sample":
            return cmd_sample(config, args)
        if args.command == "sweep":
            return cmd_sweep(config)
        return cmd_report(config, args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError, KeyError, json.JSONDecodeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
