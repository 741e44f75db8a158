"""The block Cholesky precision estimator: alternating Lasso/Glasso per group.

Each group j is fit independently: starting from D_j = I, the multivariate
Lasso regression of the group on its predecessors (weighted by the current
noise precision) alternates with a penalized log-determinant solve on the
residual covariance until both factors stop moving, then the groups are
assembled into Omega = T' D^{-1} T. Special method modes recover classical
estimators: a singleton partition gives the modified Cholesky estimator, a
single group gives the graphical lasso, an identity T gives the independent
block-diagonal estimator, and truncated designs give the block-banded one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .blocks import BlockDiagSpd, BlockLowerUnit, GroupPartition, PrecisionEstimate, assemble
from .errors import InvalidInputError, NotPositiveDefiniteError
from .glasso import GlassoProblem, solve_glasso
from .lasso import solve_lasso_gram
from .linalg import spd_cholesky, spd_inverse, symmetrize

__all__ = [
    "FitConfig",
    "Dataset",
    "METHOD_MODES",
    "center_columns",
    "banded_design",
    "fit",
]

METHOD_MODES = ("bcd", "mcd", "glasso_only", "block_diagonal", "banded")


@dataclass(frozen=True)
class FitConfig:
    """Penalties, tolerances and method mode of one fit.

    tau1/tau2 bound the squared Frobenius change of A_j and D_j between
    outer iterations (absolute, not relative). banded_k is the number of
    nearest predecessor groups kept in the design for the banded mode.
    """

    lambda1: float
    lambda2: float
    tau1: float = 1e-6
    tau2: float = 1e-6
    max_outer_iterations: int = 100
    method_mode: str = "bcd"
    banded_k: int = 1

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InvalidInputError("penalties must be >= 0")
        if self.tau1 <= 0 or self.tau2 <= 0:
            raise InvalidInputError("tau1 and tau2 must be > 0")
        if self.max_outer_iterations < 1:
            raise InvalidInputError("max_outer_iterations must be >= 1")
        if self.method_mode not in METHOD_MODES:
            raise InvalidInputError(f"unknown method mode {self.method_mode!r}")
        if self.method_mode == "banded" and self.banded_k < 1:
            raise InvalidInputError("banded mode needs k >= 1")


@dataclass(frozen=True)
class Dataset:
    """An n x p data matrix with its group partition."""

    data: np.ndarray
    partition: GroupPartition
    centered: bool = False

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 2:
            raise InvalidInputError("data must be a 2-d array with n >= 2 rows")
        if not np.all(np.isfinite(data)):
            raise InvalidInputError("data contains non-finite values")
        if self.partition.total != data.shape[1]:
            raise InvalidInputError(
                f"partition total {self.partition.total} != p = {data.shape[1]}"
            )
        if self.centered and np.max(np.abs(data.mean(axis=0))) > 1e-10:
            raise InvalidInputError("dataset marked centered but column means are not 0")
        object.__setattr__(self, "data", data)

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def p(self) -> int:
        return self.data.shape[1]


def center_columns(d: Dataset) -> Dataset:
    """Remove column means (two passes, so means land at 0 to ~1e-15 scale)."""
    x = d.data - d.data.mean(axis=0)
    x -= x.mean(axis=0)
    return Dataset(x, d.partition, centered=True)


def banded_design(d: Dataset, j: int, k: int) -> np.ndarray:
    """Design block for group j (0-based) keeping only the k nearest
    predecessor groups, i.e. groups max(0, j-k) .. j-1."""
    off = d.partition.offsets
    lo = off[max(0, j - k)]
    hi = off[j]
    return d.data[:, lo:hi]


def _fit_group(
    x: np.ndarray,
    z: np.ndarray,
    config: FitConfig,
    init_dinv: np.ndarray | None = None,
    objective_path: list | None = None,
):
    """Alternate the Lasso and Glasso steps for one group until both factors
    converge. Returns (coef, glasso_solution, iterations, converged)."""
    n, pj = x.shape
    sxx = symmetrize(x.T @ x / n)
    if z.shape[1] == 0:
        # first group (or empty band): A_j = 0, one Glasso solve settles D_j
        sol = solve_glasso(GlassoProblem(sxx, config.lambda2))
        if objective_path is not None:
            objective_path.append(sol.objective)
        return np.zeros((pj, 0)), sol, 1, True

    gz = symmetrize(z.T @ z / n)
    cxz = x.T @ z / n
    if init_dinv is None:
        weight = np.eye(pj)
        d_prev = np.eye(pj)
    else:
        weight = symmetrize(init_dinv)
        d_prev = spd_inverse(spd_cholesky(weight))
    a_prev = np.zeros((pj, z.shape[1]))
    coef = a_prev
    sol = None
    theta_ws = None
    iterations = 0
    converged = False
    while iterations < config.max_outer_iterations and not converged:
        iterations += 1
        coef, _, _ = solve_lasso_gram(weight, gz, cxz, config.lambda1, a0=coef)
        # residual covariance from explicit residuals: PSD by construction
        resid = x - z @ coef.T
        s_eps = symmetrize(resid.T @ resid / n)
        sol = solve_glasso(GlassoProblem(s_eps, config.lambda2), init_theta=theta_ws)
        theta_ws = sol.theta
        if objective_path is not None:
            objective_path.append(
                sol.objective + config.lambda1 * float(np.sum(np.abs(coef)))
            )
        d_cov = sol.covariance
        da = float(np.sum((coef - a_prev) ** 2))
        dd = float(np.sum((d_cov - d_prev) ** 2))
        if da < config.tau1 and dd < config.tau2:
            converged = True
        a_prev, d_prev, weight = coef, d_cov, sol.theta
    return coef, sol, iterations, converged


def _split_coef(coef: np.ndarray, partition: GroupPartition, j: int, first_group: int):
    """Slice a stacked coefficient matrix into per-predecessor-group T blocks."""
    blocks = {}
    off = partition.offsets
    base = off[first_group]
    for i in range(first_group, j):
        lo, hi = off[i] - base, off[i] + partition.sizes[i] - base
        blocks[(j, i)] = -coef[:, lo:hi]
    return blocks


def fit(
    d: Dataset,
    config: FitConfig,
    init_dinv: tuple[np.ndarray, ...] | None = None,
) -> PrecisionEstimate:
    """Run the full estimation procedure and assemble the precision estimate.

    Data are centered first if needed. `init_dinv` optionally replaces the
    identity Step-0 initializer of each group's noise precision (used for
    warm starts along a tuning path); it never changes the estimand, only
    the iteration path.
    """
    if not d.centered:
        d = center_columns(d)

    mode = config.method_mode
    if mode == "mcd":
        d = Dataset(d.data, GroupPartition([1] * d.p), centered=True)
        config = replace(config, method_mode="bcd")
        return fit(d, config, init_dinv=init_dinv)
    if mode == "glasso_only":
        d = Dataset(d.data, GroupPartition([d.p]), centered=True)

    partition = d.partition
    m = partition.n_groups
    t_blocks: dict[tuple[int, int], np.ndarray] = {}
    dinv_blocks: list[np.ndarray] = []
    iterations: list[int] = []
    flags: list[bool] = []

    for j in range(m):
        x = d.data[:, partition.group_slice(j)]
        if mode == "block_diagonal" or mode == "glasso_only" or j == 0:
            z = np.empty((d.n, 0))
        elif mode == "banded":
            z = banded_design(d, j, config.banded_k)
        else:
            z = d.data[:, partition.predecessor_slice(j)]
        init_j = None if init_dinv is None else init_dinv[j]
        try:
            coef, sol, iters, conv = _fit_group(x, z, config, init_dinv=init_j)
        except (NotPositiveDefiniteError, InvalidInputError) as exc:
            raise type(exc)(f"group {j + 1}: {exc}") from exc
        if z.shape[1] > 0:
            first = max(0, j - config.banded_k) if mode == "banded" else 0
            t_blocks.update(_split_coef(coef, partition, j, first))
        dinv_blocks.append(sol.theta)
        iterations.append(iters)
        flags.append(conv)

    t = BlockLowerUnit(partition, t_blocks)
    dinv = BlockDiagSpd(partition, tuple(dinv_blocks))
    omega = assemble(t, dinv)
    try:
        return PrecisionEstimate(
            partition=partition,
            t=t,
            dinv=dinv,
            omega=omega,
            lambda1=float(config.lambda1),
            lambda2=float(config.lambda2),
            per_group_iterations=tuple(iterations),
            converged_flags=tuple(flags),
        )
    except NotPositiveDefiniteError as exc:
        # happens only when a group's residual covariance is numerically
        # singular (exact in-sample collinearity), which makes the penalized
        # objective unbounded and the noise precision diverge
        raise NotPositiveDefiniteError(
            "assembled estimate lost positive definiteness in floating point; "
            "a group is exactly collinear with its predecessors at these "
            f"penalties (increase lambda1/lambda2 or add rows): {exc}"
        ) from exc
