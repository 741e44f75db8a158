"""Penalized log-determinant solver for the per-group noise precision.

Minimizes, over SPD Theta,

    -log|Theta| + tr(S Theta) + lambda2 * sum_{i != k} |Theta_ik|

(the diagonal is unpenalized). The algorithm is blockwise coordinate
descent on columns of Theta: with the rest of the matrix fixed, each
column reduces to a Lasso subproblem whose Gram is the Schur complement
Theta11^{-1}, read off the working covariance W = Theta^{-1} that is
maintained incrementally. Working on the Theta column directly (rather
than the W column of the classic dual sweep) keeps every iterate SPD and
makes the objective non-increasing sweep by sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NotPositiveDefiniteError
from .lasso import solve_lasso_gram
from .linalg import check_symmetric, spd_cholesky, spd_inverse, spd_logdet, symmetrize

__all__ = [
    "GlassoProblem",
    "GlassoSolution",
    "solve_glasso",
    "glasso_lambda_max",
    "glasso_objective",
    "glasso_kkt_residual",
]

MAX_OUTER_SWEEPS = 500
# mean-abs change of W per sweep, relative to mean |diag(S)|. Tight enough
# that refitting the same problem under a permuted variable layout agrees
# to ~1e-10, which the group-permutation-invariance contract needs.
OUTER_TOL = 1e-9
INNER_TOL = 1e-12
INNER_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class GlassoProblem:
    """Empirical residual covariance plus the off-diagonal l1 penalty level."""

    s: np.ndarray
    lambda2: float

    def __post_init__(self):
        s = check_symmetric(self.s, "s")
        if np.any(np.diag(s) < 0):
            raise InvalidInputError("covariance diagonal must be non-negative")
        if self.lambda2 < 0:
            raise InvalidInputError("lambda2 must be >= 0")
        object.__setattr__(self, "s", s)


@dataclass(frozen=True)
class GlassoSolution:
    theta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    covariance: np.ndarray  # theta^{-1} as maintained by the sweep


def glasso_objective(s: np.ndarray, lam: float, theta: np.ndarray) -> float:
    """The penalized negative log-likelihood at `theta`."""
    logdet = spd_logdet(spd_cholesky(theta))
    off = float(np.sum(np.abs(theta))) - float(np.sum(np.abs(np.diag(theta))))
    return -logdet + float(np.sum(s * theta)) + lam * off


def glasso_lambda_max(s: np.ndarray) -> float:
    """Smallest penalty at which the solution is exactly diagonal."""
    s = check_symmetric(s, "s")
    if s.shape[0] == 1:
        return 0.0
    off = s - np.diag(np.diag(s))
    return float(np.max(np.abs(off)))


def solve_glasso(
    problem: GlassoProblem,
    init_theta: np.ndarray | None = None,
    max_sweeps: int = MAX_OUTER_SWEEPS,
    tol: float = OUTER_TOL,
    objective_path: list | None = None,
) -> GlassoSolution:
    """Solve the penalized log-determinant problem.

    For lambda2 = 0 the input must be SPD and the exact inverse is returned.
    A warm start `init_theta` (any SPD matrix) only shortens the path; the
    optimum is unique for lambda2 > 0.
    """
    s = problem.s
    lam = problem.lambda2
    p = s.shape[0]
    diag = np.diag(s)
    if np.any(diag == 0.0):
        raise InvalidInputError("covariance has a zero diagonal entry")

    if p == 1:
        theta = np.array([[1.0 / s[0, 0]]])
        obj = glasso_objective(s, lam, theta)
        if objective_path is not None:
            objective_path.append(obj)
        return GlassoSolution(theta, obj, 1, True, s.copy())

    if lam == 0.0:
        try:
            factor = spd_cholesky(s)
        except NotPositiveDefiniteError:
            raise NotPositiveDefiniteError(
                "lambda2 = 0 requires a nonsingular covariance"
            ) from None
        theta = spd_inverse(factor)
        obj = glasso_objective(s, lam, theta)
        if objective_path is not None:
            objective_path.append(obj)
        return GlassoSolution(theta, obj, 1, True, s.copy())

    if init_theta is not None:
        theta = symmetrize(init_theta)
    else:
        theta = spd_inverse(spd_cholesky(s + lam * np.eye(p)))
    w = np.empty_like(theta)

    mean_diag = float(np.mean(np.abs(diag)))
    others = [np.array([i for i in range(p) if i != col]) for col in range(p)]
    unit_w = np.ones((1, 1))

    sweeps = 0
    converged = False
    while sweeps < max_sweeps and not converged:
        sweeps += 1
        # refresh W from Theta once per sweep so incremental updates cannot drift
        w = spd_inverse(spd_cholesky(theta))
        w_prev = w.copy()
        for col in range(p):
            idx = others[col]
            w12 = w[idx, col]
            w22 = w[col, col]
            v = w[np.ix_(idx, idx)] - np.outer(w12, w12) / w22  # = Theta11^{-1}
            s12 = s[idx, col]
            s22 = s[col, col]
            beta0 = theta[idx, col].reshape(1, -1)
            beta, _, _ = solve_lasso_gram(
                unit_w,
                s22 * v,
                -s12.reshape(1, -1),
                2.0 * lam,
                a0=beta0,
                tol=INNER_TOL,
                max_sweeps=INNER_MAX_SWEEPS,
            )
            beta = beta[0]
            u = v @ beta
            theta[idx, col] = beta
            theta[col, idx] = beta
            theta[col, col] = 1.0 / s22 + float(beta @ u)
            w[np.ix_(idx, idx)] = v + s22 * np.outer(u, u)
            w[idx, col] = -s22 * u
            w[col, idx] = -s22 * u
            w[col, col] = s22
        if objective_path is not None:
            objective_path.append(glasso_objective(s, lam, theta))
        if float(np.mean(np.abs(w - w_prev))) < tol * mean_diag:
            converged = True

    theta = symmetrize(theta)
    obj = glasso_objective(s, lam, theta)
    return GlassoSolution(theta, obj, sweeps, converged, symmetrize(w))


def glasso_kkt_residual(s: np.ndarray, lam: float, theta: np.ndarray) -> float:
    """Max violation of the stationarity conditions at `theta`.

    diag(theta^{-1}) must equal diag(s); off-diagonal residuals must stay in
    the lambda2 box, with the sign pinned wherever theta is nonzero.
    """
    r = spd_inverse(spd_cholesky(theta)) - s
    p = s.shape[0]
    res = float(np.max(np.abs(np.diag(r))))
    off = ~np.eye(p, dtype=bool)
    active = off & (theta != 0.0)
    inactive = off & (theta == 0.0)
    if np.any(active):
        res = max(res, float(np.max(np.abs(r[active] - lam * np.sign(theta[active])))))
    if np.any(inactive):
        res = max(res, float(np.max(np.maximum(np.abs(r[inactive]) - lam, 0.0))))
    return res
