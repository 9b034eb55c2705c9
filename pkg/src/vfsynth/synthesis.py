"""Scenario program assembly, QP solve with KKT certification, and the
epsilon-beta sample-size certificates.

The synthesis QP minimizes the mean squared error of V(x; theta) against the
expert cost-to-go samples subject to one linear descent constraint per
demonstration tuple. The binomial-tail certificate arithmetic is done in the
log domain; an exact big-integer rational path is kept for cross-checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from .dynamics import Bounds, ModelParams, SimGrid, hold_step_batch
from .ocp import StageCost
from .value_function import Basis, features_matrix


class InfeasibleSynthesisError(RuntimeError):
    """The descent constraints admit no parameter vector for this basis."""

    def __init__(self, message, worst_rows=None):
        super().__init__(message)
        self.worst_rows = worst_rows or []


@dataclass
class QpProblem:
    hessian: np.ndarray  # (d, d), 2*(Phi^T Phi)/M + 2*reg*I
    linear: np.ndarray  # (d,), -2*(Phi^T J)/M
    constraint_matrix: np.ndarray  # (rows, d), rows a_i with a_i . theta <= b_i
    constraint_rhs: np.ndarray  # (rows,)
    reg: float
    const_term: float  # sum(J_i^2)/M
    features: Optional[np.ndarray] = None  # Phi, kept for MSE reporting
    values: Optional[np.ndarray] = None  # J


@dataclass
class SynthesisResult:
    theta: np.ndarray
    training_mse: float
    max_constraint_residual: float
    kkt_stationarity: float
    kkt_complementarity: float
    active_count: int
    status: str  # optimal | infeasible | max_iters
    multipliers: Optional[np.ndarray] = None


@dataclass(frozen=True)
class ScenarioCertificate:
    eps: float
    beta: float
    m_samples: int
    dim: int

    def __post_init__(self):
        if not (0 < self.eps < 1 and 0 < self.beta < 1):
            raise ValueError("eps and beta must lie in (0, 1)")
        if self.m_samples < 0 or self.dim < 1:
            raise ValueError("invalid sample count or dimension")

    @property
    def valid(self) -> bool:
        return beta_bound(self.eps, self.m_samples, self.dim) <= self.beta


def assemble_qp(
    states,
    inputs,
    j_values,
    basis: Basis,
    stage: StageCost,
    grid: SimGrid,
    params: ModelParams,
    reg: float = 1e-8,
    nonneg: bool = False,
) -> QpProblem:
    """Build the scenario QP from demonstration arrays.

    Row i of the constraint matrix is phi(f(x_i, u_i)) - phi(x_i) with
    right-hand side -l(x_i, u_i). With `nonneg`, sample-wise rows
    -phi(x_i) . theta <= 0 are appended.
    """
    X = np.asarray(states, dtype=float)
    U = np.asarray(inputs, dtype=float).reshape(-1)
    J = np.asarray(j_values, dtype=float)
    m = X.shape[0]
    if m == 0:
        raise ValueError("dataset must be nonempty")
    if not (U.size == m and J.size == m):
        raise ValueError("states, inputs and values must have equal length")

    phi = features_matrix(basis, X)
    if not np.all(np.isfinite(phi)):
        raise ValueError("non-finite features")
    x_plus = hold_step_batch(X, U, grid, params)
    phi_plus = features_matrix(basis, x_plus)

    d = phi.shape[1]
    hessian = 2.0 * (phi.T @ phi) / m + 2.0 * reg * np.eye(d)
    linear = -2.0 * (phi.T @ J) / m
    A = phi_plus - phi
    dx = X - stage.x_sp
    du = U - stage.u_sp[0]
    ell = (dx * dx) @ stage.q_weight + stage.r_weight * du * du
    b = -ell
    if nonneg:
        A = np.vstack([A, -phi])
        b = np.concatenate([b, np.zeros(m)])
    return QpProblem(
        hessian=hessian,
        linear=linear,
        constraint_matrix=A,
        constraint_rhs=b,
        reg=reg,
        const_term=float(J @ J) / m,
        features=phi,
        values=J,
    )


def _kkt_solve(H, g, A, b, working):
    """Equality-constrained solve on the working set; returns (theta, mu)."""
    d = H.shape[0]
    k = len(working)
    if k == 0:
        return np.linalg.solve(H, -g), np.zeros(0)
    Aw = A[working]
    kkt = np.zeros((d + k, d + k))
    kkt[:d, :d] = H
    kkt[:d, d:] = Aw.T
    kkt[d:, :d] = Aw
    rhs = np.concatenate([-g, b[working]])
    sol = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    return sol[:d], sol[d:]


def _least_violation_point(H, g, A, b):
    """Minimizer of ||max(A theta - b, 0)||^2 from the unconstrained optimum."""
    from scipy.optimize import minimize

    def fun(theta):
        r = np.maximum(A @ theta - b, 0.0)
        return float(r @ r), 2.0 * (A.T @ r)

    theta0 = np.linalg.solve(H, -g)
    res = minimize(fun, theta0, jac=True, method="L-BFGS-B",
                   options={"maxiter": 2000, "ftol": 1e-18, "gtol": 1e-12})
    return res.x


def _interior_point(H, g, A, b):
    """Interior-point solve of min 0.5 x'Hx + g'x s.t. Ax <= b.

    Returns (status, theta, mu) with mu the inequality multipliers.
    """
    from cvxopt import matrix, solvers

    opts = {
        "show_progress": False,
        "abstol": 1e-12,
        "reltol": 1e-12,
        "feastol": 1e-10,
        "maxiters": 200,
    }
    try:
        sol = solvers.qp(
            matrix(H), matrix(g), matrix(A), matrix(b), options=opts
        )
    except (ValueError, ArithmeticError):
        return "failed", None, None
    theta = np.array(sol["x"]).reshape(-1)
    mu = np.array(sol["z"]).reshape(-1)
    return sol["status"], theta, mu


def solve_qp(
    qp: QpProblem,
    feas_tol: float = 1e-8,
    kkt_tol: float = 1e-6,
    max_iters: int = 100,
    start_active_set=(),
) -> SynthesisResult:
    """Solve the strictly convex scenario QP with crisp KKT certification.

    An interior-point pass locates the optimum and its active set; an
    active-set polish (equality solve on the active rows, dropping negative
    multipliers and adding violated rows) then sharpens primal feasibility
    and complementarity to machine precision. Raises
    InfeasibleSynthesisError with the worst residual rows when no feasible
    theta exists. `start_active_set` only seeds the polish; the optimum of a
    strictly convex QP does not depend on it.
    """
    H = qp.hessian
    g = qp.linear
    A = qp.constraint_matrix
    b = qp.constraint_rhs
    m, d = (A.shape if A.size else (0, H.shape[0]))

    if m == 0:
        theta = np.linalg.solve(H, -g)
        return _certify(qp, theta, np.zeros(0), [], status="optimal")

    ip_status, theta_ip, mu_ip = _interior_point(H, g, A, b)
    if theta_ip is None or not np.all(np.isfinite(theta_ip)):
        theta_ip = _least_violation_point(H, g, A, b)
        mu_ip = np.zeros(m)

    # Active set at the interior-point solution, optionally seeded.
    resid_ip = A @ theta_ip - b
    scale = 1.0 + float(np.max(np.abs(b))) if m else 1.0
    mu_floor = 1e-9 * (1.0 + float(np.max(mu_ip)))
    working = sorted(
        set(np.flatnonzero((mu_ip > mu_floor) | (resid_ip > -1e-7 * scale)))
        | {int(i) for i in start_active_set}
    )

    theta, mu_w = theta_ip, mu_ip[working]
    polished = False
    for _ in range(max_iters):
        theta, mu_w = _kkt_solve(H, g, A, b, working)
        if len(working) and np.min(mu_w) < -1e-10:
            working.pop(int(np.argmin(mu_w)))
            continue
        resid = A @ theta - b
        worst = int(np.argmax(resid))
        if resid[worst] > feas_tol and worst not in working:
            working.append(worst)
            continue
        polished = True
        break

    if not polished:
        theta, mu = theta_ip, np.maximum(mu_ip, 0.0)
        working = list(np.flatnonzero(mu_ip > mu_floor))
    else:
        mu = np.zeros(m)
        mu[working] = np.maximum(mu_w, 0.0)
    result = _certify(qp, theta, mu, working, status="optimal")
    if (
        result.max_constraint_residual > feas_tol
        or result.kkt_stationarity > kkt_tol * (1.0 + float(np.max(np.abs(g))))
        or result.kkt_complementarity > kkt_tol
    ):
        # distinguish a genuinely infeasible problem from a sloppy solve
        theta_lv = _least_violation_point(H, g, A, b)
        resid_lv = A @ theta_lv - b
        if np.max(resid_lv) > feas_tol:
            order = np.argsort(resid_lv)[::-1][:10]
            rows = [(int(i), float(resid_lv[i])) for i in order]
            raise InfeasibleSynthesisError(
                "descent constraints are infeasible for this basis; worst rows "
                f"(index, residual): {rows}",
                worst_rows=rows,
            )
        result.status = "max_iters"
    return result


def _certify(qp: QpProblem, theta, mu, working, status) -> SynthesisResult:
    A, b = qp.constraint_matrix, qp.constraint_rhs
    if A.size:
        resid = A @ theta - b
        max_resid = float(np.max(resid))
        stat = float(np.max(np.abs(qp.hessian @ theta + qp.linear + A.T @ mu)))
        comp = float(np.max(np.abs(mu * resid))) if mu.size else 0.0
    else:
        max_resid = -np.inf
        stat = float(np.max(np.abs(qp.hessian @ theta + qp.linear)))
        comp = 0.0
    if qp.features is not None:
        err = qp.features @ theta - qp.values
        mse = float(err @ err) / qp.features.shape[0]
    else:
        mse = float(
            0.5 * theta @ qp.hessian @ theta
            + qp.linear @ theta
            + qp.const_term
            - qp.reg * theta @ theta
        )
    return SynthesisResult(
        theta=theta,
        training_mse=mse,
        max_constraint_residual=max_resid,
        kkt_stationarity=stat,
        kkt_complementarity=comp,
        active_count=len(working),
        status=status,
        multipliers=mu,
    )


def beta_bound(eps: float, m_samples: int, dim: int) -> float:
    """Binomial tail sum_{i=0}^{dim-1} C(M, i) eps^i (1-eps)^(M-i).

    Evaluated with log-gamma coefficients and log-sum-exp accumulation so
    values like 1e-10 at M ~ 3000 do not underflow intermediate terms.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if m_samples < 0 or dim < 1:
        raise ValueError("need m_samples >= 0 and dim >= 1")
    if dim - 1 >= m_samples:
        return 1.0
    i = np.arange(dim)
    log_terms = (
        gammaln(m_samples + 1)
        - gammaln(i + 1)
        - gammaln(m_samples - i + 1)
        + i * np.log(eps)
        + (m_samples - i) * np.log1p(-eps)
    )
    return float(min(1.0, np.exp(logsumexp(log_terms))))


def beta_bound_exact(eps: Fraction, m_samples: int, dim: int) -> Fraction:
    """Exact rational binomial tail; the oracle for beta_bound."""
    eps = Fraction(eps)
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    return sum(
        Fraction(comb(m_samples, i)) * eps**i * (1 - eps) ** (m_samples - i)
        for i in range(min(dim, m_samples + 1))
    )


def min_samples(eps: float, beta: float, dim: int) -> int:
    """Smallest M with beta_bound(eps, M, dim) <= beta.

    Exact by monotonicity of the tail in M: exponential bracketing followed
    by binary search.
    """
    if not (0.0 < eps < 1.0 and 0.0 < beta < 1.0):
        raise ValueError("eps and beta must lie in (0, 1)")
    if dim < 1:
        raise ValueError("dim must be >= 1")
    hi = max(dim, 1)
    while beta_bound(eps, hi, dim) > beta:
        hi *= 2
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if beta_bound(eps, mid, dim) <= beta:
            hi = mid
        else:
            lo = mid
    if beta_bound(eps, hi - 1, dim) <= beta:
        hi -= 1  # guard against lo never having been evaluated
    return hi
