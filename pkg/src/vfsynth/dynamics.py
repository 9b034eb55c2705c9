"""CSTR model, Euler discretization and control-interval rollout.

States are plain numpy vectors: x = (scaled concentration, scaled reactor
temperature), the input is the scalar coolant flow rate. The discrete-time
map used throughout the package is `hold_step`: `substeps` Euler steps of
length `h` with the input held constant over one control interval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernels import rollout_fine


class NumericDomainError(ValueError):
    """A dynamics evaluation produced a non-finite value."""


@dataclass(frozen=True)
class ModelParams:
    tau: float = 20.0
    k_rate: float = 300.0
    b_act: float = 5.0
    x_f: float = 0.3947
    x_c: float = 0.3816
    a_coef: float = 0.117

    def __post_init__(self):
        vals = (self.tau, self.k_rate, self.b_act, self.x_f, self.x_c, self.a_coef)
        if not all(np.isfinite(v) for v in vals):
            raise ValueError("model parameters must be finite")
        if self.tau <= 0:
            raise ValueError("residence time tau must be positive")

    def as_tuple(self):
        return (self.tau, self.k_rate, self.b_act, self.x_f, self.x_c, self.a_coef)


@dataclass(frozen=True)
class Bounds:
    """State box and input box, elementwise lo < hi."""

    x_lo: np.ndarray = field(default_factory=lambda: np.array([0.0632, 0.4519]))
    x_hi: np.ndarray = field(default_factory=lambda: np.array([0.4632, 0.8519]))
    u_lo: np.ndarray = field(default_factory=lambda: np.array([0.0]))
    u_hi: np.ndarray = field(default_factory=lambda: np.array([2.0]))

    def __post_init__(self):
        object.__setattr__(self, "x_lo", np.asarray(self.x_lo, dtype=float))
        object.__setattr__(self, "x_hi", np.asarray(self.x_hi, dtype=float))
        object.__setattr__(self, "u_lo", np.asarray(self.u_lo, dtype=float))
        object.__setattr__(self, "u_hi", np.asarray(self.u_hi, dtype=float))
        if not (np.all(self.x_lo < self.x_hi) and np.all(self.u_lo < self.u_hi)):
            raise ValueError("bounds require lo < hi elementwise")

    def with_x_lo(self, index: int, value: float) -> "Bounds":
        x_lo = self.x_lo.copy()
        x_lo[index] = value
        return Bounds(x_lo=x_lo, x_hi=self.x_hi, u_lo=self.u_lo, u_hi=self.u_hi)


@dataclass(frozen=True)
class SimGrid:
    """Integration step h and control interval t_s; t_s must be an exact
    integer multiple of h."""

    h: float = 0.1
    t_s: float = 3.0

    def __post_init__(self):
        if self.h <= 0:
            raise ValueError("integration step h must be positive")
        n = self.t_s / self.h
        if abs(n - round(n)) > 1e-9 or round(n) < 1:
            raise ValueError("t_s must be an exact integer multiple of h")

    @property
    def substeps(self) -> int:
        return int(round(self.t_s / self.h))


# Paper setpoint of the CSTR benchmark (unstable steady state).
X_SP = np.array([0.2632, 0.6519])
U_SP = np.array([0.7853])


def cstr_derivative(x, u, p: ModelParams = ModelParams()) -> np.ndarray:
    """Continuous-time right-hand side (x1_dot, x2_dot)."""
    x = np.asarray(x, dtype=float)
    u0 = float(np.asarray(u).reshape(-1)[0])
    r = p.k_rate * x[0] * np.exp(-p.b_act / x[1])
    d1 = (1.0 - x[0]) / p.tau - r
    d2 = (p.x_f - x[1]) / p.tau + r - p.a_coef * u0 * (x[1] - p.x_c)
    out = np.array([d1, d2])
    if not np.all(np.isfinite(out)):
        raise NumericDomainError("non-finite derivative (overflow in rate term)")
    return out


def euler_step(x, u, h: float, p: ModelParams = ModelParams()) -> np.ndarray:
    """One explicit Euler step x + h * f(x, u). No clipping to bounds."""
    if h < 0:
        raise ValueError("step length must be nonnegative")
    if h == 0:
        return np.asarray(x, dtype=float).copy()
    u_arr = np.asarray(u, dtype=float).reshape(-1)
    out = rollout_fine(np.asarray(x, dtype=float), u_arr[:1], h, 1, p.as_tuple())[-1]
    if not np.all(np.isfinite(out)):
        raise NumericDomainError("non-finite state after Euler step")
    return out


def hold_step(x, u, grid: SimGrid = SimGrid(), p: ModelParams = ModelParams()) -> np.ndarray:
    """One control interval: `grid.substeps` Euler steps with u held constant.

    This is the discrete-time map f(x, u) seen by the OCP, the descent
    constraints and the closed-loop simulation.
    """
    u_arr = np.asarray(u, dtype=float).reshape(-1)
    out = rollout_fine(
        np.asarray(x, dtype=float), u_arr[:1], grid.h, grid.substeps, p.as_tuple()
    )[-1]
    if not np.all(np.isfinite(out)):
        raise NumericDomainError("non-finite state after control interval")
    return out


def rollout(x0, u_seq, grid: SimGrid = SimGrid(), p: ModelParams = ModelParams()) -> np.ndarray:
    """Iterated hold_step; returns len(u_seq)+1 knot states starting at x0."""
    u_arr = np.asarray(u_seq, dtype=float).reshape(-1)
    if u_arr.size == 0:
        raise ValueError("u_seq must be nonempty")
    fine = rollout_fine(np.asarray(x0, dtype=float), u_arr, grid.h, grid.substeps, p.as_tuple())
    out = fine[:: grid.substeps].copy()
    if not np.all(np.isfinite(out)):
        raise NumericDomainError("non-finite state in rollout")
    return out


def hold_step_batch(X, U, grid: SimGrid, p: ModelParams) -> np.ndarray:
    """Vectorized hold_step over rows of X (M,2) with inputs U (M,).

    Pure numpy (independent of the kernel backend); used where many
    successors are needed at once, e.g. descent-constraint assembly.
    """
    X = np.asarray(X, dtype=float)
    U = np.asarray(U, dtype=float).reshape(-1)
    x1 = X[:, 0].copy()
    x2 = X[:, 1].copy()
    h = grid.h
    for _ in range(grid.substeps):
        r = p.k_rate * x1 * np.exp(-p.b_act / x2)
        d1 = (1.0 - x1) / p.tau - r
        d2 = (p.x_f - x2) / p.tau + r - p.a_coef * U * (x2 - p.x_c)
        x1 = x1 + h * d1
        x2 = x2 + h * d2
    out = np.column_stack([x1, x2])
    if not np.all(np.isfinite(out)):
        raise NumericDomainError("non-finite state in batched rollout")
    return out
