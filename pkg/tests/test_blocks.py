import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockchol import (
    BlockDiagSpd,
    BlockLowerUnit,
    GroupPartition,
    assemble,
    block_diag_eigen_union_check,
    estimate_from_json,
    estimate_to_json,
    omega_to_json,
    population_decompose,
)
from blockchol.errors import InvalidInputError, NotPositiveDefiniteError
from blockchol.linalg import spd_cholesky, spd_inverse

from conftest import clamped_spd, estimate_from_omega, random_partition, random_spd


def random_factors(rng, partition):
    t_blocks = {}
    for j in range(partition.n_groups):
        for i in range(j):
            t_blocks[(j, i)] = rng.standard_normal((partition.sizes[j], partition.sizes[i]))
    d_blocks = tuple(random_spd(rng, s) for s in partition.sizes)
    return BlockLowerUnit(partition, t_blocks), BlockDiagSpd(partition, d_blocks)


class TestPartition:
    def test_offsets(self):
        part = GroupPartition([3, 2, 3])
        assert part.offsets == (0, 3, 5)
        assert part.total == 8
        assert part.group_slice(1) == slice(3, 5)
        assert part.predecessor_slice(2) == slice(0, 5)

    def test_invalid_sizes(self):
        with pytest.raises(InvalidInputError):
            GroupPartition([2, 0, 1])
        with pytest.raises(InvalidInputError):
            GroupPartition([])


class TestAssemble:
    def test_identity(self):
        part = GroupPartition([2, 1])
        omega = assemble(BlockLowerUnit(part), BlockDiagSpd(part, (np.eye(2), np.eye(1))))
        assert np.array_equal(omega, np.eye(3))

    def test_two_by_two_hand_expansion(self):
        # T = [[1,0],[-a,1]], D = diag(d1,d2):
        # T' D^{-1} T = [[1/d1 + a^2/d2, -a/d2], [-a/d2, 1/d2]]
        a, d1, d2 = 0.7, 2.0, 0.5
        part = GroupPartition([1, 1])
        t = BlockLowerUnit(part, {(1, 0): np.array([[-a]])})
        dinv = BlockDiagSpd(part, (np.array([[1 / d1]]), np.array([[1 / d2]])))
        omega = assemble(t, dinv)
        expect = np.array([[1 / d1 + a * a / d2, -a / d2], [-a / d2, 1 / d2]])
        assert np.allclose(omega, expect, atol=1e-15)

    def test_matches_naive_triple_product(self, rng):
        part = GroupPartition([2, 1, 3])
        t, dinv = random_factors(rng, part)
        omega = assemble(t, dinv)
        naive = t.dense().T @ dinv.dense() @ t.dense()
        assert np.max(np.abs(omega - naive)) < 1e-12

    def test_exact_symmetry_and_pd(self, rng):
        for _ in range(5):
            part = random_partition(rng, 9)
            t, dinv = random_factors(rng, part)
            omega = assemble(t, dinv)
            assert np.array_equal(omega, omega.T)
            spd_cholesky(omega)  # must not raise

    def test_partition_mismatch(self, rng):
        t = BlockLowerUnit(GroupPartition([2, 2]))
        dinv = BlockDiagSpd(GroupPartition([1, 3]), (np.eye(1), np.eye(3)))
        with pytest.raises(InvalidInputError):
            assemble(t, dinv)


class TestPopulationDecompose:
    def test_identity(self):
        part = GroupPartition([2, 3])
        t, dinv = population_decompose(np.eye(5), part)
        assert t.dense() is not None
        assert np.array_equal(t.dense(), np.eye(5))
        assert all(np.array_equal(b, np.eye(s)) for b, s in zip(dinv.blocks, part.sizes))

    def test_bivariate_hand_values(self):
        # regression of X2 on X1 under corr 0.5: slope 0.5, residual var 0.75
        sigma = np.array([[1.0, 0.5], [0.5, 1.0]])
        t, dinv = population_decompose(sigma, GroupPartition([1, 1]))
        assert np.allclose(t.blocks[(1, 0)], [[-0.5]], atol=1e-15)
        assert np.allclose(dinv.blocks[0], [[1.0]], atol=1e-15)
        assert np.allclose(dinv.blocks[1], [[1.0 / 0.75]], atol=1e-12)

    def test_roundtrip_vs_inverse_oracle(self, rng):
        sigma = random_spd(rng, 8)
        t, dinv = population_decompose(sigma, GroupPartition([3, 2, 3]))
        target = spd_inverse(spd_cholesky(sigma))
        assert np.max(np.abs(assemble(t, dinv) - target)) < 1e-9

    def test_non_spd_rejected(self):
        with pytest.raises(NotPositiveDefiniteError):
            population_decompose(np.array([[1.0, 2.0], [2.0, 1.0]]), GroupPartition([1, 1]))


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(2, 30))
def test_decompose_assemble_roundtrip_property(seed, p):
    rng = np.random.default_rng(seed)
    omega = random_spd(rng, p)
    part = random_partition(rng, p)
    t, dinv = population_decompose(spd_inverse(spd_cholesky(omega)), part)
    assert np.max(np.abs(assemble(t, dinv) - omega)) < 1e-9


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), p=st.integers(2, 20))
def test_factor_singular_values_bounded(seed, p):
    # eigenvalues of the truth clamped into [1/theta, theta]
    theta = 10.0
    rng = np.random.default_rng(seed)
    omega = clamped_spd(rng, p, 1.0 / theta, theta)
    part = random_partition(rng, p)
    t, dinv = population_decompose(spd_inverse(spd_cholesky(omega)), part)
    for m in (t.dense(), dinv.dense()):
        sv = np.linalg.svd(m, compute_uv=False)
        assert sv.min() > 0.0
        assert sv.max() < 1e12


class TestEigenUnion:
    def test_two_singletons(self):
        part = GroupPartition([1, 1])
        dinv = BlockDiagSpd(part, (np.array([[1.0]]), np.array([[2.0]])))
        assert block_diag_eigen_union_check(dinv)

    def test_hand_two_by_two(self):
        # eigenvalues of [[2,1],[1,2]] are 3 and 1; union with {5}
        part = GroupPartition([2, 1])
        dinv = BlockDiagSpd(part, (np.array([[2.0, 1.0], [1.0, 2.0]]), np.array([[5.0]])))
        assert block_diag_eigen_union_check(dinv)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1), p=st.integers(2, 16))
    def test_holds_universally(self, seed, p):
        rng = np.random.default_rng(seed)
        part = random_partition(rng, p)
        dinv = BlockDiagSpd(part, tuple(random_spd(rng, s) for s in part.sizes))
        assert block_diag_eigen_union_check(dinv)


class TestJsonFormat:
    def test_roundtrip_exact(self, rng):
        omega = random_spd(rng, 6)
        est = estimate_from_omega(omega, GroupPartition([2, 4]), lambda1=0.1, lambda2=0.25)
        doc = estimate_from_json(estimate_to_json(est))
        assert np.array_equal(doc["omega"], est.omega)
        assert doc["groups"].sizes == (2, 4)
        assert doc["lambda1"] == 0.1
        assert doc["converged"] == [True, True]

    def test_diagonal_estimate_has_only_diagonal_triplets(self):
        part = GroupPartition([1, 1, 1])
        est = estimate_from_omega(np.diag([1.0, 2.0, 3.0]), part)
        triplets = json.loads(estimate_to_json(est))["omega"]
        assert all(i == j for i, j, _ in triplets)
        assert len(triplets) == 3

    def test_seventeen_significant_digits(self):
        part = GroupPartition([1])
        est = estimate_from_omega(np.array([[1.0 / 3.0]]), part)
        text = estimate_to_json(est)
        assert "0.33333333333333331" in text

    def test_truth_export(self, rng):
        omega = random_spd(rng, 4)
        doc = json.loads(omega_to_json(omega, GroupPartition([2, 2])))
        assert doc["p"] == 4
        back = estimate_from_json(omega_to_json(omega, GroupPartition([2, 2])))
        assert np.array_equal(back["omega"], omega)

    def test_malformed_rejected(self):
        with pytest.raises(InvalidInputError):
            estimate_from_json('{"p": 2, "groups": [1], "omega": []}')
