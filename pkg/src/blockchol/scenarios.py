"""Simulation truths and the seeded multivariate-normal sampler.

Seven precision-matrix structures are generated at any dimension, from plain
autoregressive bands to random sparse matrices, with the underdetermined ones
ridge-inflated until well conditioned. Randomness comes from a counter-based
Philox stream with normal variates via inverse CDF, so identical seeds give
identical bits on any platform; truth generation and data sampling use
separately tagged streams of the same seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .blocks import GroupPartition
from .errors import InvalidInputError
from .estimator import Dataset
from .linalg import spd_cholesky, spd_inverse, symmetrize

__all__ = [
    "ScenarioSpec",
    "GeneratedTruth",
    "ar_matrix",
    "ma_matrix",
    "rect_embed",
    "generate",
    "sample_mvn",
    "dataset_to_csv",
]

_MASK64 = (1 << 64) - 1
_TRUTH_TAG = 1
_SAMPLE_TAG = 2

_MA_BANDS = (0.5, 0.4, 0.3)
_SHIFT_LAG = 20  # lag of the moving-average shift in scenarios 5 and 6


def _stream(seed: int, tag: int) -> np.random.Generator:
    key = np.array([seed & _MASK64, tag & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def _uniforms(gen: np.random.Generator, shape) -> np.ndarray:
    """Open-interval uniforms from the counter stream, reproducible bit-for-bit."""
    k = gen.integers(0, 1 << 53, size=shape, dtype=np.uint64)
    return (k.astype(np.float64) + 0.5) * 2.0**-53


def _normals(gen: np.random.Generator, shape) -> np.ndarray:
    return ndtri(_uniforms(gen, shape))


@dataclass(frozen=True)
class ScenarioSpec:
    """Which structure to generate, at what size, under which grouping."""

    scenario: int
    p: int
    partition: GroupPartition
    seed: int = 0
    alpha_step: float = 0.05
    alpha_floor: float = 0.05

    def __post_init__(self):
        if not 1 <= self.scenario <= 7:
            raise InvalidInputError("scenario must be in 1..7")
        if self.partition.total != self.p:
            raise InvalidInputError("partition total does not match p")
        if self.alpha_step <= 0 or self.alpha_floor <= 0:
            raise InvalidInputError("alpha_step and alpha_floor must be > 0")


@dataclass(frozen=True)
class GeneratedTruth:
    """A known precision matrix with its covariance and support mask."""

    omega: np.ndarray
    sigma: np.ndarray
    support: np.ndarray
    partition: GroupPartition


def ar_matrix(dim: int, rho: float) -> np.ndarray:
    """Autoregressive structure: entry (i, j) = rho^|i-j|."""
    if dim < 1:
        raise InvalidInputError("dim must be >= 1")
    if not abs(rho) < 1:
        raise InvalidInputError("|rho| must be < 1")
    idx = np.arange(dim)
    return rho ** np.abs(idx[:, None] - idx[None, :])


def ma_matrix(dim: int) -> np.ndarray:
    """Banded structure: unit diagonal, sub-diagonals 0.5, 0.4, 0.3."""
    if dim < 1:
        raise InvalidInputError("dim must be >= 1")
    m = np.eye(dim)
    for lag, v in enumerate(_MA_BANDS, start=1):
        if lag >= dim:
            break
        i = np.arange(dim - lag)
        m[i, i + lag] = v
        m[i + lag, i] = v
    return m


def rect_embed(kind: str, rows: int, cols: int, rho: float = 0.5) -> np.ndarray:
    """Rectangular embedding of a square generator: the top-left
    min(rows, cols) square is the generator, the rest is zero."""
    if rows < 1 or cols < 1:
        raise InvalidInputError("rows and cols must be >= 1")
    k = min(rows, cols)
    core = ar_matrix(k, rho) if kind == "ar" else ma_matrix(k)
    out = np.zeros((rows, cols))
    out[:k, :k] = core
    return out


def _block_grid(partition: GroupPartition, diag_kind: str, off_kind: str) -> np.ndarray:
    """Symmetric block matrix with square generators on the diagonal and
    rectangular embeddings everywhere else."""
    p = partition.total
    out = np.zeros((p, p))
    for j in range(partition.n_groups):
        sj = partition.group_slice(j)
        out[sj, sj] = ar_matrix(partition.sizes[j], 0.5) if diag_kind == "ar" else ma_matrix(
            partition.sizes[j]
        )
        for i in range(j):
            si = partition.group_slice(i)
            b = rect_embed(off_kind, partition.sizes[j], partition.sizes[i])
            out[sj, si] = b
            out[si, sj] = b.T
    return out


def _shift_product(p: int, diag_kind: str, extra_lag: bool) -> np.ndarray:
    """Omega = B' H B with H block diagonal and B a banded unit shift."""
    h = np.zeros((p, p))
    start = 0
    while start < p:
        size = min(_SHIFT_LAG, p - start)
        blk = ar_matrix(size, 0.5) if diag_kind == "ar" else ma_matrix(size)
        h[start : start + size, start : start + size] = blk
        start += size
    b = np.eye(p)
    i = np.arange(p - _SHIFT_LAG)
    b[i + _SHIFT_LAG, i] = -0.8
    if extra_lag and p > _SHIFT_LAG + 1:
        i = np.arange(p - _SHIFT_LAG - 1)
        b[i + _SHIFT_LAG + 1, i] = 0.5
    omega = b.T @ h @ b
    lower = np.tril(omega)
    return lower + np.tril(omega, -1).T


def _random_sparse(p: int, gen: np.random.Generator) -> np.ndarray:
    """Zero diagonal; each upper-triangle entry is Bernoulli(0.15) times
    Unif(-1, 1), mirrored."""
    iu = np.triu_indices(p, k=1)
    keep = _uniforms(gen, len(iu[0])) < 0.15
    vals = 2.0 * _uniforms(gen, len(iu[0])) - 1.0
    out = np.zeros((p, p))
    out[iu] = np.where(keep, vals, 0.0)
    return out + out.T


def _inflate(base: np.ndarray, step: float, floor: float) -> np.ndarray:
    """Add alpha * I in increments of `step` until the smallest eigenvalue
    reaches `floor`."""
    lam_min = float(np.linalg.eigvalsh(base)[0])
    alpha = 0.0
    while lam_min + alpha < floor:
        alpha += step
    return base + alpha * np.eye(base.shape[0])


def generate(spec: ScenarioSpec) -> GeneratedTruth:
    """Build the scenario's precision matrix, its inverse and support mask."""
    part = spec.partition
    p = spec.p
    gen = _stream(spec.seed, _TRUTH_TAG)

    if spec.scenario == 1:
        omega = ar_matrix(p, 0.8)
    elif spec.scenario == 2:
        omega = np.zeros((p, p))
        for j in range(part.n_groups):
            sj = part.group_slice(j)
            omega[sj, sj] = ar_matrix(part.sizes[j], 0.5)
    elif spec.scenario == 3:
        omega = _inflate(_block_grid(part, "ma", "ar"), spec.alpha_step, spec.alpha_floor)
    elif spec.scenario == 4:
        base = _block_grid(part, "ar", "ma")
        idx = np.concatenate(
            [off + gen.permutation(size) for off, size in zip(part.offsets, part.sizes)]
        )
        base = base[np.ix_(idx, idx)]
        omega = _inflate(base, spec.alpha_step, spec.alpha_floor)
    elif spec.scenario in (5, 6):
        if p < _SHIFT_LAG + 2:
            raise InvalidInputError(
                f"scenarios 5 and 6 need p >= {_SHIFT_LAG + 2} for the shift structure"
            )
        omega = _shift_product(p, "ar" if spec.scenario == 5 else "ma", spec.scenario == 6)
    else:
        omega = _inflate(_random_sparse(p, gen), spec.alpha_step, spec.alpha_floor)

    sigma = spd_inverse(spd_cholesky(omega))
    support = np.abs(omega) > 1e-12
    return GeneratedTruth(omega=omega, sigma=sigma, support=support, partition=part)


def sample_mvn(truth: GeneratedTruth, n: int, seed: int) -> Dataset:
    """Draw n i.i.d. rows from N(0, sigma) as x = L z, L the Cholesky factor."""
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    gen = _stream(seed, _SAMPLE_TAG)
    z = _normals(gen, (n, truth.sigma.shape[0]))
    x = z @ spd_cholesky(truth.sigma).T
    return Dataset(x, truth.partition, centered=False)


def dataset_to_csv(d: Dataset) -> str:
    """Headerless CSV with 17-significant-digit decimals (exact round trip)."""
    lines = [",".join(format(v, ".17g") for v in row) for row in d.data]
    return "\n".join(lines) + "\n"
