"""Experiment harness: data loading, corruption, repair simulation and reports."""

from .benchmark import BenchmarkReport, benchmark
from .config import ExperimentConfig, make_config, read_config_file
from .corruption import corrupt_labels, repair_units
from .io import Problem, load_dataset, read_csv
from .methods import compute_importance, datascope_engine
from .repair import CheckpointReport, run_repair_simulation, simulate
from .report import emit_report

__all__ = [
    "BenchmarkReport",
    "CheckpointReport",
    "ExperimentConfig",
    "Problem",
    "benchmark",
    "compute_importance",
    "corrupt_labels",
    "datascope_engine",
    "emit_report",
    "load_dataset",
    "make_config",
    "read_config_file",
    "read_csv",
    "repair_units",
    "run_repair_simulation",
    "simulate",
]
