"""Scenario QP assembly, active-set solve, and the sample-size certificates."""

from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from vfsynth.dynamics import ModelParams, SimGrid, U_SP, X_SP
from vfsynth.ocp import StageCost
from vfsynth.synthesis import (
    InfeasibleSynthesisError,
    QpProblem,
    ScenarioCertificate,
    assemble_qp,
    beta_bound,
    beta_bound_exact,
    min_samples,
    solve_qp,
)
from vfsynth.value_function import Basis, BasisSpec, fit_basis

CONSTANT_BASIS = Basis(
    kind="polynomial", exponents=np.array([[0, 0]]), x_sp=X_SP.copy()
)


def brute_force_qp(H, g, A, b, feas_tol=1e-9):
    """Enumerate all active sets; return the best KKT point.

    Independent oracle for small problems: for every subset of constraints up
    to size d, solve the equality-constrained system and keep the best
    feasible point with nonnegative multipliers.
    """
    d = H.shape[0]
    m = A.shape[0]

    def objective(theta):
        return 0.5 * theta @ H @ theta + g @ theta

    hinv_g = np.linalg.solve(H, g)
    theta0 = -hinv_g
    best = None
    if m == 0 or np.max(A @ theta0 - b) <= feas_tol:
        best = (objective(theta0), theta0)

    # For an active subset W, stationarity gives theta = -H^{-1}(g + A_W' mu)
    # and A_W theta = b_W reduces to (A_W H^{-1} A_W') mu = -(A_W H^{-1} g + b_W).
    # All subsets of one size are solved in a single batched call.
    hinv_at = np.linalg.solve(H, A.T) if m else np.zeros((d, 0))
    gram = A @ hinv_at
    for k in range(1, min(d, m) + 1):
        subsets = np.array(list(combinations(range(m), k)))
        gram_k = gram[subsets[:, :, None], subsets[:, None, :]]
        rhs = -(A[subsets] @ hinv_g + b[subsets])
        try:
            mus = np.linalg.solve(gram_k, rhs[..., None])[..., 0]
        except np.linalg.LinAlgError:
            mus = np.full_like(rhs, -np.inf)
            for s in range(len(subsets)):
                try:
                    mus[s] = np.linalg.solve(gram_k[s], rhs[s])
                except np.linalg.LinAlgError:
                    pass
        keep = np.flatnonzero(np.all(mus >= -1e-9, axis=1))
        if not keep.size:
            continue
        thetas = theta0 - np.einsum("sk,skd->sd", mus[keep], hinv_at.T[subsets[keep]])
        feas = np.flatnonzero(np.max(thetas @ A.T - b, axis=1) <= feas_tol)
        for s in feas:
            obj = objective(thetas[s])
            if best is None or obj < best[0]:
                best = (obj, thetas[s])
    return best


def random_feasible_qp(rng, d, m):
    """Random strictly convex QP whose constraints hold at a random anchor."""
    L = rng.normal(size=(d, d))
    H = L @ L.T + d * np.eye(d)
    g = rng.normal(size=d)
    A = rng.normal(size=(m, d))
    anchor = rng.normal(size=d)
    slack = rng.uniform(0.0, 1.0, m)
    b = A @ anchor + slack
    return QpProblem(
        hessian=H,
        linear=g,
        constraint_matrix=A,
        constraint_rhs=b,
        reg=0.0,
        const_term=0.0,
    )


class TestAssemble:
    def setup_method(self):
        self.stage = StageCost()
        self.grid = SimGrid()
        self.params = ModelParams()

    def test_setpoint_sample_with_constant_feature(self):
        X = np.array([X_SP])
        qp = assemble_qp(
            X, U_SP, np.array([0.0]), CONSTANT_BASIS, self.stage, self.grid,
            self.params, reg=1e-8,
        )
        assert qp.hessian[0, 0] == pytest.approx(2.0 + 2e-8, rel=1e-12)
        assert qp.linear[0] == 0.0
        assert abs(qp.constraint_matrix[0, 0]) <= 1e-12  # phi constant
        assert abs(qp.constraint_rhs[0]) <= 1e-12  # zero stage cost

    def test_scalar_least_squares(self):
        X = np.array([X_SP])
        qp = assemble_qp(
            X, U_SP, np.array([5.0]), CONSTANT_BASIS, self.stage, self.grid,
            self.params, reg=0.0,
        )
        res = solve_qp(qp)
        assert res.theta[0] == pytest.approx(5.0, rel=1e-10)
        assert res.status == "optimal"

    def test_rhs_nonpositive(self):
        rng = np.random.default_rng(0)
        X = rng.uniform([0.0632, 0.4519], [0.4632, 0.8519], (40, 2))
        U = rng.uniform(0, 2, 40)
        J = rng.uniform(0, 10, 40)
        basis = fit_basis(BasisSpec(d=6, seed=0), states=X)
        qp = assemble_qp(X, U, J, basis, self.stage, self.grid, self.params)
        assert np.all(qp.constraint_rhs <= 0.0)
        assert qp.constraint_matrix.shape == (40, 6)
        assert np.allclose(qp.hessian, qp.hessian.T)

    def test_nonneg_rows_appended(self):
        rng = np.random.default_rng(1)
        X = rng.uniform([0.0632, 0.4519], [0.4632, 0.8519], (10, 2))
        U = rng.uniform(0, 2, 10)
        J = rng.uniform(0, 10, 10)
        basis = fit_basis(BasisSpec(d=4, seed=0), states=X)
        qp = assemble_qp(X, U, J, basis, self.stage, self.grid, self.params, nonneg=True)
        assert qp.constraint_matrix.shape == (20, 4)
        assert np.all(qp.constraint_rhs[10:] == 0.0)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError):
            assemble_qp(
                np.zeros((0, 2)), np.zeros(0), np.zeros(0), CONSTANT_BASIS,
                self.stage, self.grid, self.params,
            )


class TestSolveQp:
    def test_unconstrained_is_ridge_solution(self):
        rng = np.random.default_rng(2)
        H = np.diag(rng.uniform(1, 3, 4))
        g = rng.normal(size=4)
        qp = QpProblem(
            hessian=H, linear=g,
            constraint_matrix=np.zeros((0, 4)), constraint_rhs=np.zeros(0),
            reg=0.0, const_term=0.0,
        )
        res = solve_qp(qp)
        np.testing.assert_allclose(res.theta, np.linalg.solve(H, -g), rtol=1e-12)
        assert res.active_count == 0

    def test_textbook_scalar_kkt(self):
        # min (theta - 1)^2 s.t. theta <= 0  ->  theta* = 0, mu = 2
        qp = QpProblem(
            hessian=np.array([[2.0]]), linear=np.array([-2.0]),
            constraint_matrix=np.array([[1.0]]), constraint_rhs=np.array([0.0]),
            reg=0.0, const_term=1.0,
        )
        res = solve_qp(qp)
        assert res.theta[0] == pytest.approx(0.0, abs=1e-12)
        assert res.multipliers[0] == pytest.approx(2.0, rel=1e-10)
        assert res.kkt_complementarity <= 1e-10
        assert res.status == "optimal"

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(3)
        for trial in range(40):
            d = int(rng.integers(1, 6))
            m = int(rng.integers(1, 11))
            qp = random_feasible_qp(rng, d, m)
            res = solve_qp(qp)
            assert res.status == "optimal"
            oracle = brute_force_qp(
                qp.hessian, qp.linear, qp.constraint_matrix, qp.constraint_rhs
            )
            assert oracle is not None
            obj = 0.5 * res.theta @ qp.hessian @ res.theta + qp.linear @ res.theta
            assert obj <= oracle[0] + 1e-8
            assert abs(obj - oracle[0]) <= 1e-7 * (1.0 + abs(oracle[0]))

    def test_infeasible_reports_worst_rows(self):
        qp = QpProblem(
            hessian=np.array([[2.0]]), linear=np.array([0.0]),
            constraint_matrix=np.array([[1.0], [-1.0]]),
            constraint_rhs=np.array([-1.0, -1.0]),  # theta <= -1 and theta >= 1
            reg=0.0, const_term=0.0,
        )
        with pytest.raises(InfeasibleSynthesisError) as err:
            solve_qp(qp)
        assert err.value.worst_rows

    def test_start_active_set_agrees(self):
        rng = np.random.default_rng(4)
        qp = random_feasible_qp(rng, 5, 12)
        base = solve_qp(qp)
        for start in ((0,), (3, 7), (1, 2, 4)):
            other = solve_qp(qp, start_active_set=start)
            assert np.max(np.abs(other.theta - base.theta)) <= 1e-8

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        qp = random_feasible_qp(rng, 4, 9)
        a = solve_qp(qp)
        b = solve_qp(qp)
        assert np.array_equal(a.theta, b.theta)
        assert a.active_count == b.active_count


class TestBetaBound:
    def test_single_sample(self):
        assert beta_bound(0.5, 1, 1) == pytest.approx(0.5, rel=1e-15)

    def test_saturates_at_one(self):
        assert beta_bound(0.3, 10, 20) == 1.0

    def test_matches_exact_small_scale(self):
        for m in (1, 5, 17, 60):
            for d in (1, 3, 10):
                for eps_num, eps_den in ((1, 5), (1, 2), (1, 10)):
                    approx = beta_bound(eps_num / eps_den, m, d)
                    exact = float(beta_bound_exact(Fraction(eps_num, eps_den), m, d))
                    assert approx == pytest.approx(exact, rel=1e-11)

    def test_monotone_decreasing_in_m(self):
        vals = [beta_bound(0.2, m, 10) for m in range(10, 200, 10)]
        assert all(b < a for a, b in zip(vals, vals[1:]))

    def test_nondecreasing_in_d(self):
        vals = [beta_bound(0.2, 100, d) for d in range(1, 30)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            beta_bound(0.0, 10, 2)
        with pytest.raises(ValueError):
            beta_bound(1.5, 10, 2)
        with pytest.raises(ValueError):
            beta_bound(0.2, 10, 0)


class TestMinSamples:
    def test_trivial_case(self):
        assert min_samples(0.5, 0.5, 1) == 1

    def test_bracketing_inequalities(self):
        for eps, beta, d in ((0.2, 1e-3, 5), (0.1, 1e-6, 12), (0.3, 1e-2, 2)):
            m = min_samples(eps, beta, d)
            assert beta_bound(eps, m, d) <= beta
            assert beta_bound(eps, m - 1, d) > beta

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            min_samples(0.0, 0.5, 1)
        with pytest.raises(ValueError):
            min_samples(0.5, 0.5, 0)


class TestCertificate:
    def test_validity_flag(self):
        m = min_samples(0.2, 1e-3, 5)
        good = ScenarioCertificate(eps=0.2, beta=1e-3, m_samples=m, dim=5)
        bad = ScenarioCertificate(eps=0.2, beta=1e-3, m_samples=m - 1, dim=5)
        assert good.valid
        assert not bad.valid

    def test_range_validation(self):
        with pytest.raises(ValueError):
            ScenarioCertificate(eps=1.5, beta=0.5, m_samples=10, dim=2)
        with pytest.raises(ValueError):
            ScenarioCertificate(eps=0.5, beta=0.5, m_samples=10, dim=0)
