"""BIC scoring and two-dimensional penalty grid search."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import InvalidInputError, NotPositiveDefiniteError
from .estimator import Dataset, FitConfig, center_columns, fit
from .glasso import glasso_lambda_max
from .lasso import LassoProblem, lasso_lambda_max
from .linalg import spd_cholesky, spd_logdet, symmetrize
from .blocks import PrecisionEstimate, format_float

__all__ = [
    "NONZERO_TOL",
    "TuningGrid",
    "BicCell",
    "bic",
    "nnz_lower",
    "auto_grid",
    "select",
    "bic_table_csv",
]

# |value| above this counts as a nonzero entry, for BIC's model size and for
# false-selection counting alike.
NONZERO_TOL = 1e-6


@dataclass(frozen=True)
class TuningGrid:
    """Descending penalty values for each axis of the (lambda1, lambda2) grid."""

    lambda1_values: tuple[float, ...]
    lambda2_values: tuple[float, ...]
    generated_from: str = "explicit"

    def __post_init__(self):
        for name, vals in (("lambda1", self.lambda1_values), ("lambda2", self.lambda2_values)):
            vals = tuple(float(v) for v in vals)
            if len(vals) < 1 or any(v < 0 for v in vals):
                raise InvalidInputError(f"{name} grid values must be >= 0")
            if any(a <= b for a, b in zip(vals, vals[1:])):
                raise InvalidInputError(f"{name} grid values must be strictly descending")
            object.__setattr__(self, f"{name}_values", vals)


@dataclass(frozen=True)
class BicCell:
    """One row of the tuning table."""

    lambda1: float
    lambda2: float
    bic: float
    nnz: int
    converged: bool


def nnz_lower(omega: np.ndarray, tol: float = NONZERO_TOL) -> int:
    """Count of strictly lower-triangular entries with |value| > tol."""
    return int(np.count_nonzero(np.abs(np.tril(omega, -1)) > tol))


def bic(est: PrecisionEstimate, s: np.ndarray, n: int) -> float:
    """BIC(lambda1, lambda2) = -log|Omega| + tr(Omega S) + (log n / n) nnz."""
    if n < 2:
        raise InvalidInputError("n must be >= 2")
    s = symmetrize(s)
    if s.shape != est.omega.shape:
        raise InvalidInputError("sample covariance shape does not match the estimate")
    try:
        logdet = spd_logdet(spd_cholesky(est.omega))
    except NotPositiveDefiniteError as exc:
        raise InvalidInputError(f"estimate is not positive definite: {exc}") from exc
    return -logdet + float(np.sum(est.omega * s)) + (np.log(n) / n) * nnz_lower(est.omega)


def auto_grid(d: Dataset, grid_size: int = 10, min_ratio: float = 0.01) -> TuningGrid:
    """Log-spaced penalty grids anchored at the full-shrinkage levels.

    The lambda2 anchor is the largest off-diagonal residual covariance entry
    across groups with A = 0. The lambda1 anchor covers both Step-1 weights
    met on the fully shrunk path (the identity Step-0 weight, and the
    diagonal precision that the top lambda2 produces), so the top grid
    corner is an exact A = 0 fixed point.
    """
    if grid_size < 2:
        raise InvalidInputError("grid_size must be >= 2")
    if not (0 < min_ratio < 1):
        raise InvalidInputError("min_ratio must lie in (0, 1)")
    if not d.centered:
        d = center_columns(d)
    part = d.partition
    lam1_top = 0.0
    lam2_top = 0.0
    for j in range(part.n_groups):
        x = d.data[:, part.group_slice(j)]
        s_j = symmetrize(x.T @ x / d.n)
        lam2_top = max(lam2_top, glasso_lambda_max(s_j))
        if j == 0:
            continue
        z = d.data[:, part.predecessor_slice(j)]
        identity = np.eye(x.shape[1])
        lam1_top = max(lam1_top, lasso_lambda_max(LassoProblem(x, z, identity, 0.0)))
        diag = np.diag(s_j).copy()
        if np.any(diag <= 0):
            raise InvalidInputError("degenerate (constant) column in the data")
        shrunk_weight = np.diag(1.0 / diag)
        lam1_top = max(lam1_top, lasso_lambda_max(LassoProblem(x, z, shrunk_weight, 0.0)))

    if lam2_top <= 0.0 and lam1_top <= 0.0:
        raise InvalidInputError("data admit no positive penalty anchor (all zero?)")
    lam1 = (
        (0.0,)
        if lam1_top <= 0.0
        else tuple(np.geomspace(lam1_top, lam1_top * min_ratio, grid_size))
    )
    lam2 = tuple(np.geomspace(lam2_top, lam2_top * min_ratio, grid_size))
    return TuningGrid(lam1, lam2, generated_from="auto")


def _fit_chain(d, lam1, lambda2_values, template, warm_start):
    """Fit one lambda1 row across descending lambda2, warm-starting each cell
    from the previous cell's noise precisions."""
    rows = []
    init = None
    for lam2 in lambda2_values:
        cfg = replace(template, lambda1=lam1, lambda2=lam2)
        try:
            est = fit(d, cfg, init_dinv=init)
        except (InvalidInputError, NotPositiveDefiniteError) as exc:
            rows.append((None, exc))
            init = None
            continue
        rows.append((est, None))
        if warm_start:
            init = est.dinv.blocks
    return rows


def select(
    d: Dataset,
    grid: TuningGrid,
    template: FitConfig,
    warm_start: bool = True,
    workers: int = 1,
) -> tuple[PrecisionEstimate, list[BicCell]]:
    """Fit every grid pair and return the BIC minimizer plus the full table.

    Ties within 1e-12 of the minimum go to the smallest lambda1, then the
    smallest lambda2. Failed cells score +inf; only a fully failed grid
    raises.
    """
    if not d.centered:
        d = center_columns(d)
    s = symmetrize(d.data.T @ d.data / d.n)

    chains = list(grid.lambda1_values)
    if workers > 1 and len(chains) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(
                pool.map(
                    lambda lam1: _fit_chain(d, lam1, grid.lambda2_values, template, warm_start),
                    chains,
                )
            )
    else:
        results = [
            _fit_chain(d, lam1, grid.lambda2_values, template, warm_start) for lam1 in chains
        ]

    table: list[BicCell] = []
    fits: list[PrecisionEstimate | None] = []
    last_error: Exception | None = None
    for lam1, row in zip(chains, results):
        for lam2, (est, err) in zip(grid.lambda2_values, row):
            if est is None:
                table.append(BicCell(lam1, lam2, float("inf"), 0, False))
                fits.append(None)
                last_error = err
            else:
                table.append(
                    BicCell(lam1, lam2, bic(est, s, d.n), nnz_lower(est.omega), est.converged)
                )
                fits.append(est)

    finite = [c.bic for c in table if np.isfinite(c.bic)]
    if not finite:
        raise type(last_error)(f"every grid cell failed; last error: {last_error}")
    best_bic = min(finite)
    candidates = [
        (c.lambda1, c.lambda2, i)
        for i, c in enumerate(table)
        if np.isfinite(c.bic) and c.bic <= best_bic + 1e-12
    ]
    _, _, best_idx = min(candidates)
    return fits[best_idx], table


def bic_table_csv(table: list[BicCell]) -> str:
    """Render the tuning table as CSV (lambda1, lambda2, bic, nnz, converged)."""
    lines = ["lambda1,lambda2,bic,nnz,converged"]
    for c in table:
        lines.append(
            f"{format_float(c.lambda1)},{format_float(c.lambda2)},"
            f"{format_float(c.bic)},{c.nnz},{'true' if c.converged else 'false'}"
        )
    return "\n".join(lines) + "\n"
