"""Command line entry point: ``pipeshap shapley|repair-sim|benchmark``."""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields

from . import __version__
from .errors import PipeshapError
from .harness.benchmark import benchmark
from .harness.config import ExperimentConfig, make_config, read_config_file
from .harness.io import load_dataset
from .harness.methods import compute_importance
from .harness.repair import run_repair_simulation
from .harness.report import (
    BENCHMARK_COLUMNS,
    IMPORTANCE_COLUMNS,
    SIMULATION_COLUMNS,
    benchmark_rows,
    emit_report,
    importance_rows,
    simulation_rows,
)
from .knn import make_utility

HELP = {
    "train": "training (fact) table CSV",
    "dim": "dimension table CSV; makes the pipeline a one-to-many join",
    "validation": "validation CSV",
    "test": "held-out test CSV (repair-sim)",
    "synthetic": "generate data instead of reading CSVs: map, fork or join",
    "features": "comma-separated feature columns of the training table",
    "dim_features": "comma-separated feature columns of the dimension table",
    "label": "label column",
    "group": "group column (needed for eqodds_diff)",
    "id_column": "column holding row ids",
    "fact_key": "foreign key column in the fact table",
    "dim_key": "key column in the dimension table",
    "scaler": "feature scaler: none, standard or log",
    "providers": "number of data providers for a fork pipeline",
    "fork": "split the training table across providers round-robin",
    "k": "number of neighbours K",
    "utility": "accuracy, fnr, fpr, tpr, tnr or eqodds_diff",
    "positive_label": "label treated as positive (default: 1 if present)",
    "empty_label": "label predicted by an empty training set (default: mean over labels)",
    "method": "importance or repair method",
    "flip_probability": "per-label flip probability for map and join corruption",
    "provider_bias_mode": "fork flip rates by provider index (linear) or shuffled",
    "checkpoints": "number of checkpoints along the repair",
    "repetitions": "number of repetitions",
    "seed": "random seed",
    "truncation": "TMC truncation tolerance, relative to |u(full)|",
    "sizes": "comma-separated training sizes (benchmark)",
    "validation_sizes": "comma-separated validation sizes (benchmark)",
    "bench_repeats": "timed runs per size; the best is kept",
    "out": "output path (stdout when omitted)",
    "format": "csv, json or both",
    "timing": "record wall-clock times in the output",
}


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", help="flat key=value config file; flags override it")
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        names = [flag, "-k", "--K"] if f.name == "k" else [flag]
        if f.name in ("fork", "timing"):
            p.add_argument(flag, dest=f.name, action=argparse.BooleanOptionalAction, default=None,
                           help=HELP.get(f.name))
        else:
            p.add_argument(*names, dest=f.name, default=None, help=HELP.get(f.name))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pipeshap",
                                     description="Shapley importance of source data for K-NN pipelines.")
    parser.add_argument("--version", action="version", version=f"pipeshap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("shapley", "compute per-variable Shapley values"),
                       ("repair-sim", "simulate importance-driven label repair"),
                       ("benchmark", "time importance computation across sizes")):
        _add_config_flags(sub.add_parser(name, help=text, description=text))
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    file_values = read_config_file(args.config) if args.config else {}
    flags = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)}
    if args.command == "benchmark" and flags["timing"] is None and "timing" not in file_values:
        flags["timing"] = True
    return make_config(file_values, flags).validate(args.command)


def _metadata(config: ExperimentConfig, command: str, **extra) -> dict:
    return {"command": command, "config": config.echo(), "seed": config.seed, "method": config.method, **extra}


def run(args: argparse.Namespace) -> None:
    config = resolve_config(args)
    if args.command == "shapley":
        problem = load_dataset(config)
        ut = make_utility(config.utility, problem.validation, problem.train, config.k,
                          problem.positive_label, problem.empty_label)
        report = compute_importance(config.method, problem.train, problem.validation, config.k, ut,
                                    seed=config.seed or 0, truncation=config.truncation)
        extra = {"engine": report.method, "utility_params": {k: v for k, v in ut.params.items()}}
        if config.timing:
            extra["wall_seconds"] = report.wall_time
        emit_report(importance_rows(report, problem.train), IMPORTANCE_COLUMNS,
                    _metadata(config, "shapley", **extra), config.out, config.format)
    elif args.command == "repair-sim":
        reports = run_repair_simulation(config)
        emit_report(simulation_rows(reports), SIMULATION_COLUMNS, _metadata(config, "repair-sim"),
                    config.out, config.format)
    else:
        rep = benchmark(config)
        emit_report(benchmark_rows(rep), BENCHMARK_COLUMNS,
                    _metadata(config, "benchmark", pipeline_class=rep.pipeline_class,
                              slopes={str(v): s for v, s in rep.slopes.items()}),
                    config.out, config.format)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except PipeshapError as exc:
        print(f"pipeshap: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
