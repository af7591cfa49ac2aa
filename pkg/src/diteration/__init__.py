"""Diffusion-based iteration for sparse fixed-point problems and linear systems."""

from .baselines import dense_solve, fixed_point_reference, gauss_seidel, jacobi, power_affine
from .conditions import (
    ConditionReport,
    fluid_reduction,
    is_irreducible,
    is_sdd_columns,
    is_sdd_rows,
    theorem1_c_bound,
    theorem2_check,
    weak_fluid_reduction,
)
from .core import FixedPointProblem, OperatorSpec, RankOne, SparseMatrix
from .distsim import SimConfig, partition, replay_check, simulate
from .engine import Schedule, SolveReport, run
from .mmio import read_edge_list, read_matrix_market, read_vector, write_matrix_market, write_vector
from .transforms import (
    build_eigen_shift,
    build_fixed,
    build_pagerank,
    build_pc,
    build_q,
    build_qprime,
    eliminate_all,
    eliminate_diagonal,
    eliminate_link,
)

__version__ = "0.1.0"
