"""Shapley value engines for K-NN utilities over provenance-tracked data."""

from .compile import BOTTOM, OracleTable, compile_add, counting_oracle
from .fast import shapley_1nn_fork, shapley_1nn_map, shapley_knn_map_fast
from .game import SubsetGame, brute_force_shapley
from .general import shapley_knn_general
from .report import ShapleyReport
from .tmc import tmc_shapley

__all__ = [
    "BOTTOM",
    "OracleTable",
    "ShapleyReport",
    "SubsetGame",
    "brute_force_shapley",
    "compile_add",
    "counting_oracle",
    "shapley_1nn_fork",
    "shapley_1nn_map",
    "shapley_knn_general",
    "shapley_knn_map_fast",
    "tmc_shapley",
]
