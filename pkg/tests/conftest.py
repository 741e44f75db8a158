import numpy as np
import pytest

from blockchol import GroupPartition, PrecisionEstimate, population_decompose, assemble
from blockchol.linalg import spd_cholesky, spd_inverse


def random_spd(rng: np.random.Generator, dim: int, jitter: float = None) -> np.ndarray:
    """Well-conditioned random SPD matrix."""
    m = rng.standard_normal((dim, dim))
    a = m @ m.T + (jitter if jitter is not None else dim) * np.eye(dim)
    return (a + a.T) / 2.0


def random_partition(rng: np.random.Generator, p: int) -> GroupPartition:
    """Random composition of p into ordered group sizes."""
    sizes = []
    left = p
    while left > 0:
        s = int(rng.integers(1, left + 1))
        sizes.append(s)
        left -= s
    return GroupPartition(sizes)


def clamped_spd(rng: np.random.Generator, dim: int, lo: float, hi: float) -> np.ndarray:
    """Random symmetric matrix with eigenvalues clamped into [lo, hi]."""
    m = rng.standard_normal((dim, dim))
    w, v = np.linalg.eigh((m + m.T) / 2.0)
    w = np.clip(np.abs(w), lo, hi)
    a = v @ np.diag(w) @ v.T
    return (a + a.T) / 2.0


def estimate_from_omega(
    omega: np.ndarray, partition: GroupPartition, lambda1: float = 0.0, lambda2: float = 0.0
) -> PrecisionEstimate:
    """Wrap an SPD matrix as a PrecisionEstimate via its exact factors."""
    sigma = spd_inverse(spd_cholesky(omega))
    t, dinv = population_decompose(sigma, partition)
    return PrecisionEstimate(
        partition=partition,
        t=t,
        dinv=dinv,
        omega=assemble(t, dinv),
        lambda1=lambda1,
        lambda2=lambda2,
        per_group_iterations=(1,) * partition.n_groups,
        converged_flags=(True,) * partition.n_groups,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
