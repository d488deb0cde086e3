"""Sparse kernels: Krylov solvers, incomplete Cholesky, aggregation AMG and
rank-one (Sherman-Morrison) solves."""
from .amg import AggregationAMG, aggregation_prolongation, amg_hierarchy, standard_aggregation
from .ichol import IncompleteCholesky, ic_factor
from .krylov import KrylovConfig, SolveStats, as_apply, gmres_right, pcg
from .rankone import RankOneMatrix
from .smw import ShermanMorrisonSolver, smw_solve

__all__ = [
    "AggregationAMG",
    "IncompleteCholesky",
    "KrylovConfig",
    "RankOneMatrix",
    "ShermanMorrisonSolver",
    "SolveStats",
    "aggregation_prolongation",
    "amg_hierarchy",
    "as_apply",
    "gmres_right",
    "ic_factor",
    "pcg",
    "smw_solve",
    "standard_aggregation",
]
