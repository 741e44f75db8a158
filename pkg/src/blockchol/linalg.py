"""Dense symmetric/SPD kernels used by every other module.

All matrices are plain float64 ndarrays. Symmetric inputs are validated (or
symmetrized) on entry; SPD factors are lower-triangular Cholesky factors with
strictly positive diagonal. Positive definiteness is always *tested* by
Cholesky success, never by eigenvalue inspection, so that the test is exact
and consistent package-wide.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .errors import InvalidInputError, NotPositiveDefiniteError

__all__ = [
    "symmetrize",
    "check_symmetric",
    "sym_eigendecomp",
    "spd_cholesky",
    "spd_logdet",
    "spd_inverse",
    "spd_solve",
]

_SYM_RTOL = 1e-8


def symmetrize(a: np.ndarray) -> np.ndarray:
    """Return the exactly symmetric part (a + a') / 2 as a new array."""
    a = np.asarray(a, dtype=np.float64)
    return (a + a.T) / 2.0


def check_symmetric(a: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Validate that `a` is a finite, square, symmetric float array.

    Returns the validated array (as float64, C-contiguous). Raises
    InvalidInputError otherwise. Symmetry is checked to a relative
    tolerance; callers that build matrices as R'R get exact symmetry.
    """
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InvalidInputError(f"{name} must be a square 2-d array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    scale = max(1.0, float(np.max(np.abs(a))))
    if np.max(np.abs(a - a.T)) > _SYM_RTOL * scale:
        raise InvalidInputError(f"{name} is not symmetric")
    return a


def sym_eigendecomp(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix.

    Returns (eigenvalues, eigenvectors) with eigenvalues sorted descending
    and eigenvectors as orthonormal columns, so m == V diag(w) V'.
    """
    m = check_symmetric(m)
    w, v = np.linalg.eigh(m)
    return w[::-1].copy(), v[:, ::-1].copy()


def spd_cholesky(m: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of an SPD matrix.

    Raises NotPositiveDefiniteError when a pivot is <= 0; callers use this
    as the package-wide positive definiteness test.
    """
    m = check_symmetric(m)
    try:
        return scipy.linalg.cholesky(m, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc


def spd_logdet(lower: np.ndarray) -> float:
    """log-determinant of the SPD matrix with Cholesky factor `lower`."""
    d = np.diagonal(lower)
    return 2.0 * float(np.sum(np.log(d)))


def spd_inverse(lower: np.ndarray) -> np.ndarray:
    """Inverse of the SPD matrix with Cholesky factor `lower` (symmetric result)."""
    eye = np.eye(lower.shape[0])
    inv = scipy.linalg.cho_solve((lower, True), eye, check_finite=False)
    return symmetrize(inv)


def spd_solve(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve A x = b where A has Cholesky factor `lower`."""
    return scipy.linalg.cho_solve((lower, True), b, check_finite=False)
