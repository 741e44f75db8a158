"""Sparse inverse covariance estimation under partial variable ordering.

The precision matrix is factored as Omega = T' D^{-1} T along an ordered
group partition of the variables; each group is fit by alternating a
weighted multivariate Lasso regression on its predecessors with a penalized
log-determinant solve on its residual covariance. The factors guarantee a
positive definite estimate, and the fit is invariant to reordering
variables inside any group.
"""

__version__ = "0.1.0"

from .blocks import (
    BlockDiagSpd,
    BlockLowerUnit,
    GroupPartition,
    PrecisionEstimate,
    assemble,
    block_diag_eigen_union_check,
    estimate_from_json,
    estimate_to_json,
    omega_to_json,
    population_decompose,
)
from .errors import InvalidInputError, NotPositiveDefiniteError
from .estimator import Dataset, FitConfig, banded_design, center_columns, fit
from .glasso import GlassoProblem, GlassoSolution, glasso_lambda_max, solve_glasso
from .lasso import LassoProblem, LassoSolution, lasso_lambda_max, solve_lasso
from .linalg import spd_cholesky, spd_inverse, spd_logdet, sym_eigendecomp
from .metrics import LossReport, aggregate, losses
from .scenarios import GeneratedTruth, ScenarioSpec, ar_matrix, generate, ma_matrix, rect_embed, sample_mvn
from .selection import TuningGrid, auto_grid, bic, select

__all__ = [
    "__version__",
    "BlockDiagSpd",
    "BlockLowerUnit",
    "Dataset",
    "FitConfig",
    "GeneratedTruth",
    "GlassoProblem",
    "GlassoSolution",
    "GroupPartition",
    "InvalidInputError",
    "LassoProblem",
    "LassoSolution",
    "LossReport",
    "NotPositiveDefiniteError",
    "PrecisionEstimate",
    "ScenarioSpec",
    "TuningGrid",
    "aggregate",
    "ar_matrix",
    "assemble",
    "auto_grid",
    "banded_design",
    "bic",
    "block_diag_eigen_union_check",
    "center_columns",
    "estimate_from_json",
    "estimate_to_json",
    "fit",
    "generate",
    "glasso_lambda_max",
    "lasso_lambda_max",
    "losses",
    "ma_matrix",
    "omega_to_json",
    "population_decompose",
    "rect_embed",
    "sample_mvn",
    "select",
    "solve_glasso",
    "solve_lasso",
    "spd_cholesky",
    "spd_inverse",
    "spd_logdet",
    "sym_eigendecomp",
]
