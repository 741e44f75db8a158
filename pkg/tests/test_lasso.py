import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blockchol.errors import InvalidInputError
from blockchol.lasso import (
    LassoProblem,
    lasso_kkt_residual,
    lasso_lambda_max,
    solve_lasso,
)
from blockchol.linalg import spd_cholesky

from conftest import random_spd


def eq7_objective(problem, coef):
    """The weighted-Lasso objective evaluated directly from residuals."""
    e = problem.response_block - problem.design_block @ coef.T
    quad = np.trace(e @ problem.weight @ e.T) / problem.n
    return quad + problem.lambda1 * np.sum(np.abs(coef))


def kron_oracle_lasso(x, z, w, lam, tol=1e-13, max_iter=200_000):
    """Brute-force solver on the explicitly materialized vectorized problem.

    y = vec(X L), design = L' (x) Z with L L' = W; plain textbook coordinate
    descent on (1/n)||y - D b||^2 + lam ||b||_1, written independently of the
    production Gram-block solver.
    """
    n = x.shape[0]
    low = np.linalg.cholesky(w)
    y = (x @ low).flatten(order="F")
    design = np.kron(low.T, z)
    q = design.shape[1]
    beta = np.zeros(q)
    col_sq = (design**2).sum(axis=0)
    r = y - design @ beta
    for _ in range(max_iter):
        max_d = 0.0
        for l in range(q):
            if col_sq[l] == 0.0:
                continue
            u = (2.0 / n) * (design[:, l] @ r) + (2.0 / n) * col_sq[l] * beta[l]
            h = (2.0 / n) * col_sq[l]
            new = np.sign(u) * max(abs(u) - lam, 0.0) / h
            d = new - beta[l]
            if d != 0.0:
                r -= d * design[:, l]
                beta[l] = new
                max_d = max(max_d, abs(d))
        if max_d < tol:
            break
    return beta  # = vec(A') stacked column-major over responses


class TestSolveLasso:
    def test_unpenalized_is_ols(self, rng):
        n, pj, q = 60, 2, 4
        z = np.linalg.qr(rng.standard_normal((n, q)))[0]  # orthogonal columns
        x = rng.standard_normal((n, pj))
        prob = LassoProblem(x, z, np.eye(pj), 0.0)
        sol = solve_lasso(prob)
        ols = x.T @ z @ np.linalg.inv(z.T @ z)
        assert np.max(np.abs(sol.coef - ols)) < 1e-8
        assert sol.converged

    def test_above_lambda_max_is_exactly_zero(self, rng):
        x = rng.standard_normal((30, 3))
        z = rng.standard_normal((30, 5))
        w = random_spd(rng, 3)
        lam = lasso_lambda_max(LassoProblem(x, z, w, 0.0))
        sol = solve_lasso(LassoProblem(x, z, w, lam * 1.000001))
        assert np.array_equal(sol.coef, np.zeros((3, 5)))

    def test_univariate_soft_threshold_formula(self, rng):
        n = 50
        z = rng.standard_normal((n, 1))
        z = z / z.std(ddof=0)  # unit variance
        x = 0.8 * z + 0.1 * rng.standard_normal((n, 1))
        lam = 0.3
        sol = solve_lasso(LassoProblem(x, z, np.eye(1), lam))
        c = float(z[:, 0] @ x[:, 0]) / n
        g = float(z[:, 0] @ z[:, 0]) / n
        expect = np.sign(c) * max(abs(c) - lam / 2.0, 0.0) / g
        assert abs(sol.coef[0, 0] - expect) < 1e-10

    def test_objective_matches_direct_evaluation(self, rng):
        x = rng.standard_normal((25, 3))
        z = rng.standard_normal((25, 4))
        prob = LassoProblem(x, z, random_spd(rng, 3), 0.2)
        sol = solve_lasso(prob)
        direct = eq7_objective(prob, sol.coef)
        assert abs(sol.objective - direct) <= 1e-10 * max(1.0, abs(direct))

    def test_objective_monotone_per_sweep(self, rng):
        x = rng.standard_normal((40, 3))
        z = rng.standard_normal((40, 6))
        prob = LassoProblem(x, z, random_spd(rng, 3), 0.05)
        path = []
        solve_lasso(prob, objective_path=path)
        path = np.array(path)
        assert np.all(np.diff(path) <= 1e-12 * np.maximum(1.0, np.abs(path[:-1])))

    def test_row_permutation_invariance(self, rng):
        x = rng.standard_normal((35, 2))
        z = rng.standard_normal((35, 4))
        w = random_spd(rng, 2)
        perm = rng.permutation(35)
        a = solve_lasso(LassoProblem(x, z, w, 0.1)).coef
        b = solve_lasso(LassoProblem(x[perm], z[perm], w, 0.1)).coef
        assert np.max(np.abs(a - b)) < 1e-8

    def test_iteration_cap_flags_not_converged(self, rng):
        x = rng.standard_normal((30, 3))
        z = rng.standard_normal((30, 6))
        sol = solve_lasso(LassoProblem(x, z, np.eye(3), 0.01), max_sweeps=1)
        assert not sol.converged
        assert sol.iterations == 1

    def test_kkt_residual_bound(self, rng):
        for _ in range(10):
            x = rng.standard_normal((40, 3))
            z = rng.standard_normal((40, 7))
            lam = float(rng.uniform(0.005, 1.0))
            prob = LassoProblem(x, z, random_spd(rng, 3), lam)
            sol = solve_lasso(prob)
            assert lasso_kkt_residual(prob, sol.coef) <= 1e-4 * max(1.0, lam)

    def test_invalid_inputs(self, rng):
        x = rng.standard_normal((10, 2))
        z = rng.standard_normal((10, 3))
        with pytest.raises(InvalidInputError):
            LassoProblem(x, z, np.array([[1.0, 2.0], [2.0, 1.0]]), 0.1)  # indefinite
        with pytest.raises(InvalidInputError):
            LassoProblem(x * np.nan, z, np.eye(2), 0.1)
        with pytest.raises(InvalidInputError):
            LassoProblem(x, z, np.eye(2), -0.5)


class TestLambdaMax:
    def test_zero_response(self, rng):
        prob = LassoProblem(np.zeros((10, 2)), rng.standard_normal((10, 3)), np.eye(2), 0.0)
        assert lasso_lambda_max(prob) == 0.0

    def test_univariate_formula(self, rng):
        n = 40
        z = rng.standard_normal((n, 1))
        x = rng.standard_normal((n, 1))
        prob = LassoProblem(x, z, np.eye(1), 0.0)
        assert np.isclose(lasso_lambda_max(prob), 2.0 * abs(float(z[:, 0] @ x[:, 0])) / n)

    @settings(max_examples=15, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_bracketing(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((25, 2))
        z = rng.standard_normal((25, 4))
        w = random_spd(rng, 2)
        lam_max = lasso_lambda_max(LassoProblem(x, z, w, 0.0))
        above = solve_lasso(LassoProblem(x, z, w, 1.001 * lam_max)).coef
        below = solve_lasso(LassoProblem(x, z, w, 0.9 * lam_max)).coef
        assert np.all(above == 0.0)
        assert np.any(below != 0.0)


class TestKroneckerEquivalence:
    @pytest.mark.parametrize("seed", range(6))
    def test_matches_materialized_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(8, 21))
        pj = int(rng.integers(1, 4))
        q = int(rng.integers(1, 5))
        x = rng.standard_normal((n, pj))
        z = rng.standard_normal((n, q))
        w = random_spd(rng, pj)
        lam = float(rng.uniform(0.01, 0.6))
        sol = solve_lasso(LassoProblem(x, z, w, lam))
        beta = kron_oracle_lasso(x, z, w, lam)
        # oracle stacks vec(A'): column-major over responses
        assert np.max(np.abs(sol.coef.T.flatten(order="F") - beta)) < 1e-6

    def test_weight_factor_choice_is_irrelevant(self, rng):
        # the objective depends on W only, not on which square root is used
        x = rng.standard_normal((15, 2))
        z = rng.standard_normal((15, 3))
        w = random_spd(rng, 2)
        lam = 0.15
        sol = solve_lasso(LassoProblem(x, z, w, lam))
        wvals, wvecs = np.linalg.eigh(w)
        sym_root = wvecs @ np.diag(np.sqrt(wvals)) @ wvecs.T
        beta_sym = kron_oracle_lasso_with_root(x, z, sym_root, lam)
        assert np.max(np.abs(sol.coef.T.flatten(order="F") - beta_sym)) < 1e-6


def kron_oracle_lasso_with_root(x, z, root, lam, tol=1e-13):
    """Same oracle but with an arbitrary square root F (F F' = W)."""
    n = x.shape[0]
    y = (x @ root).flatten(order="F")
    design = np.kron(root.T, z)
    q = design.shape[1]
    beta = np.zeros(q)
    col_sq = (design**2).sum(axis=0)
    r = y - design @ beta
    for _ in range(200_000):
        max_d = 0.0
        for l in range(q):
            if col_sq[l] == 0.0:
                continue
            u = (2.0 / n) * (design[:, l] @ r) + (2.0 / n) * col_sq[l] * beta[l]
            h = (2.0 / n) * col_sq[l]
            new = np.sign(u) * max(abs(u) - lam, 0.0) / h
            d = new - beta[l]
            if d != 0.0:
                r -= d * design[:, l]
                beta[l] = new
                max_d = max(max_d, abs(d))
        if max_d < tol:
            break
    return beta
