"""Block Cholesky data model.

A precision matrix under a partial variable ordering factors as
Omega = T' D^{-1} T with T unit block-lower-triangular (identity diagonal
blocks) and D^{-1} block-diagonal SPD. This module holds the partition and
factor containers, the assembly product, the population decomposition used
as a testing oracle, and the JSON triplet export of fitted estimates.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NotPositiveDefiniteError
from .linalg import (
    spd_cholesky,
    spd_inverse,
    spd_solve,
    sym_eigendecomp,
    check_symmetric,
)

__all__ = [
    "GroupPartition",
    "BlockLowerUnit",
    "BlockDiagSpd",
    "PrecisionEstimate",
    "assemble",
    "population_decompose",
    "block_diag_eigen_union_check",
    "estimate_to_json",
    "estimate_from_json",
    "omega_to_json",
    "format_float",
]


def format_float(x: float) -> str:
    """Decimal text with 17 significant digits (lossless float64 round trip)."""
    return format(float(x), ".17g")


@dataclass(frozen=True)
class GroupPartition:
    """Ordered group sizes (p_1, ..., p_M) of a partial variable ordering."""

    sizes: tuple[int, ...]

    def __init__(self, sizes) -> None:
        sizes = tuple(int(s) for s in sizes)
        if len(sizes) < 1 or any(s < 1 for s in sizes):
            raise InvalidInputError(f"group sizes must all be >= 1, got {sizes}")
        object.__setattr__(self, "sizes", sizes)

    @property
    def n_groups(self) -> int:
        return len(self.sizes)

    @property
    def total(self) -> int:
        return sum(self.sizes)

    @property
    def offsets(self) -> tuple[int, ...]:
        """Cumulative starting index of each group; offsets[0] == 0."""
        out, acc = [], 0
        for s in self.sizes:
            out.append(acc)
            acc += s
        return tuple(out)

    def group_slice(self, j: int) -> slice:
        """Column slice of group j (0-based)."""
        off = self.offsets[j]
        return slice(off, off + self.sizes[j])

    def predecessor_slice(self, j: int) -> slice:
        """Column slice covering all groups before group j."""
        return slice(0, self.offsets[j])


@dataclass(frozen=True)
class BlockLowerUnit:
    """The factor T: unit block lower triangular.

    Only strictly-lower blocks are stored, keyed by 0-based (j, i) with
    j > i; block (j, i) is the p_j x p_i region of T (that is, -A_ji).
    Absent blocks are zero, and the identity diagonal is implicit.
    """

    partition: GroupPartition
    blocks: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        sizes = self.partition.sizes
        for (j, i), b in self.blocks.items():
            if not (0 <= i < j < len(sizes)):
                raise InvalidInputError(f"block key {(j, i)} is not strictly lower")
            if b.shape != (sizes[j], sizes[i]):
                raise InvalidInputError(
                    f"block {(j, i)} has shape {b.shape}, expected {(sizes[j], sizes[i])}"
                )

    def dense(self) -> np.ndarray:
        """Materialize T as a dense p x p array."""
        p = self.partition.total
        t = np.eye(p)
        off = self.partition.offsets
        sz = self.partition.sizes
        for (j, i), b in self.blocks.items():
            t[off[j] : off[j] + sz[j], off[i] : off[i] + sz[i]] = b
        return t


@dataclass(frozen=True)
class BlockDiagSpd:
    """The factor D^{-1}: one SPD block per group."""

    partition: GroupPartition
    blocks: tuple[np.ndarray, ...]

    def __init__(self, partition: GroupPartition, blocks) -> None:
        blocks = tuple(np.asarray(b, dtype=np.float64) for b in blocks)
        if len(blocks) != partition.n_groups:
            raise InvalidInputError("one diagonal block per group is required")
        for j, b in enumerate(blocks):
            pj = partition.sizes[j]
            if b.shape != (pj, pj):
                raise InvalidInputError(f"diagonal block {j} has shape {b.shape}, expected ({pj}, {pj})")
            spd_cholesky(b)  # raises if not SPD
        object.__setattr__(self, "partition", partition)
        object.__setattr__(self, "blocks", blocks)

    def dense(self) -> np.ndarray:
        p = self.partition.total
        d = np.zeros((p, p))
        for j, b in enumerate(self.blocks):
            sl = self.partition.group_slice(j)
            d[sl, sl] = b
        return d


def assemble(t: BlockLowerUnit, dinv: BlockDiagSpd) -> np.ndarray:
    """Assemble Omega = T' D^{-1} T.

    Computed as R'R with R = W'T, where W_j is the lower Cholesky factor of
    each diagonal block of D^{-1}. The result is built from its lower
    triangle so mirrored entries are bitwise equal, and it is SPD whenever
    every diagonal block is SPD.
    """
    if t.partition.sizes != dinv.partition.sizes:
        raise InvalidInputError("factor partitions do not match")
    part = t.partition
    r = t.dense()
    for j, b in enumerate(dinv.blocks):
        w = spd_cholesky(b)
        sl = part.group_slice(j)
        r[sl, :] = w.T @ r[sl, :]
    omega = r.T @ r
    lower = np.tril(omega)
    return lower + np.tril(omega, -1).T


def population_decompose(
    sigma: np.ndarray, partition: GroupPartition
) -> tuple[BlockLowerUnit, BlockDiagSpd]:
    """Exact block Cholesky factors of Omega = sigma^{-1} for SPD sigma.

    Group j is regressed on all its predecessors: A_j reads off sigma as
    Cov(X_j, Z_j) Cov(Z_j)^{-1} and D_j is the Schur complement
    Cov(X_j) - A_j Cov(Z_j, X_j), with D_1 = Cov(X_1). Assembling the
    returned factors reproduces sigma^{-1}.
    """
    sigma = check_symmetric(sigma, "sigma")
    if sigma.shape[0] != partition.total:
        raise InvalidInputError("partition total does not match sigma dimension")
    spd_cholesky(sigma)  # fail fast on non-SPD input

    t_blocks: dict[tuple[int, int], np.ndarray] = {}
    d_inv_blocks: list[np.ndarray] = []
    off = partition.offsets
    sz = partition.sizes
    for j in range(partition.n_groups):
        gj = partition.group_slice(j)
        if j == 0:
            d_j = sigma[gj, gj]
        else:
            zj = partition.predecessor_slice(j)
            cov_zz = sigma[zj, zj]
            cov_zx = sigma[zj, gj]  # q_j x p_j
            a_j = spd_solve(spd_cholesky(cov_zz), cov_zx).T  # p_j x q_j
            d_j = sigma[gj, gj] - a_j @ cov_zx
            for i in range(j):
                t_blocks[(j, i)] = -a_j[:, off[i] : off[i] + sz[i]]
        d_j = check_symmetric((d_j + d_j.T) / 2.0, f"conditional covariance of group {j}")
        d_inv_blocks.append(spd_inverse(spd_cholesky(d_j)))
    return BlockLowerUnit(partition, t_blocks), BlockDiagSpd(partition, tuple(d_inv_blocks))


def block_diag_eigen_union_check(dinv: BlockDiagSpd, tol: float = 1e-8) -> bool:
    """Check that the assembled block-diagonal spectrum is the union of block spectra."""
    per_block = np.concatenate([sym_eigendecomp(b)[0] for b in dinv.blocks])
    full = sym_eigendecomp(dinv.dense())[0]
    return bool(np.all(np.abs(np.sort(per_block) - np.sort(full)) <= tol))


@dataclass(frozen=True)
class PrecisionEstimate:
    """A fitted precision matrix with its factors and tuning metadata."""

    partition: GroupPartition
    t: BlockLowerUnit
    dinv: BlockDiagSpd
    omega: np.ndarray
    lambda1: float
    lambda2: float
    per_group_iterations: tuple[int, ...]
    converged_flags: tuple[bool, ...]

    def __post_init__(self):
        omega = assemble(self.t, self.dinv)
        if np.max(np.abs(omega - self.omega)) > 1e-12:
            raise InvalidInputError("omega does not match its factors")
        spd_cholesky(self.omega)

    @property
    def converged(self) -> bool:
        return all(self.converged_flags)


def _omega_triplets(omega: np.ndarray) -> str:
    rows = []
    p = omega.shape[0]
    for i in range(p):
        for j in range(i + 1):
            v = omega[i, j]
            if v != 0.0:
                rows.append(f"[{i},{j},{format_float(v)}]")
    return "[" + ",".join(rows) + "]"


def estimate_to_json(est: PrecisionEstimate) -> str:
    """Serialize an estimate to the JSON triplet format.

    Only nonzero entries of the lower triangle are written; values carry 17
    significant digits so they round-trip exactly.
    """
    groups = ",".join(str(s) for s in est.partition.sizes)
    iters = ",".join(str(i) for i in est.per_group_iterations)
    conv = ",".join("true" if c else "false" for c in est.converged_flags)
    return (
        "{"
        f'"p":{est.partition.total},'
        f'"groups":[{groups}],'
        f'"lambda1":{format_float(est.lambda1)},'
        f'"lambda2":{format_float(est.lambda2)},'
        f'"omega":{_omega_triplets(est.omega)},'
        f'"iterations":[{iters}],'
        f'"converged":[{conv}]'
        "}"
    )


def omega_to_json(omega: np.ndarray, partition: GroupPartition) -> str:
    """Serialize a bare symmetric matrix (e.g. a simulation truth) as triplets."""
    groups = ",".join(str(s) for s in partition.sizes)
    return (
        "{"
        f'"p":{partition.total},'
        f'"groups":[{groups}],'
        f'"omega":{_omega_triplets(np.asarray(omega, dtype=np.float64))}'
        "}"
    )


def estimate_from_json(text: str) -> dict:
    """Parse the JSON triplet format back into a dense symmetric omega.

    Returns a dict with keys p, groups (GroupPartition), omega (ndarray) and,
    when present, lambda1/lambda2/iterations/converged.
    """
    doc = json.loads(text)
    try:
        p = int(doc["p"])
        partition = GroupPartition(doc["groups"])
        triplets = doc["omega"]
    except (KeyError, TypeError) as exc:
        raise InvalidInputError(f"malformed estimate JSON: {exc}") from exc
    if partition.total != p:
        raise InvalidInputError("estimate JSON: groups do not sum to p")
    omega = np.zeros((p, p))
    for i, j, v in triplets:
        i, j = int(i), int(j)
        if not (0 <= j <= i < p):
            raise InvalidInputError(f"estimate JSON: triplet ({i},{j}) outside lower triangle")
        omega[i, j] = v
        omega[j, i] = v
    out = {"p": p, "groups": partition, "omega": omega}
    for k in ("lambda1", "lambda2", "iterations", "converged"):
        if k in doc:
            out[k] = doc[k]
    return out
