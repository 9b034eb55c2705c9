"""Empirical validation: descent-violation measurement on held-out data,
closed-loop simulation, policy comparison and the constraint-adaptation
experiment."""

from __future__ import annotations

from dataclasses import dataclass, replace as dc_replace
from typing import Optional

import numpy as np

from .dynamics import Bounds, ModelParams, SimGrid, hold_step
from .ocp import (
    LearnedTerminal,
    OcpSpec,
    StageCost,
    mpc_step,
    shift_warm_start,
)
from .value_function import Basis, evaluate


@dataclass
class ViolationReport:
    mode: str  # expert_action | mpc_one_step
    m_test: int
    eps_hat: float
    violations: list  # (index, state, residual)
    tolerance: float
    solver_failures: int = 0


@dataclass
class ClosedLoopRun:
    x_traj: np.ndarray  # (steps+1, 2)
    u_traj: np.ndarray  # (steps,)
    stage_cost_sum: float
    converged: bool
    steps_to_converge: Optional[int]
    solve_times: np.ndarray
    constraint_violation_max: float
    status: str = "ok"


def verify_descent(
    states,
    inputs,
    basis: Basis,
    theta,
    mode: str,
    stage: StageCost,
    grid: SimGrid,
    params: ModelParams,
    bounds: Bounds,
    tol: float = 1e-9,
    ocp_overrides: Optional[dict] = None,
) -> ViolationReport:
    """Check the descent condition V(f(x,u)) - V(x) <= -l(x,u) pointwise.

    mode 'expert_action' uses the stored inputs; 'mpc_one_step' solves the
    N=1 MPC with the learned terminal cost at each state and checks its
    action. A point counts as violating when the residual exceeds
    tol * (1 + |V(x)|).
    """
    if mode not in ("expert_action", "mpc_one_step"):
        raise ValueError(f"unknown verification mode {mode!r}")
    states = np.asarray(states, dtype=float)
    theta = np.asarray(theta, dtype=float)
    m = states.shape[0]
    if m == 0:
        raise ValueError("test set must be nonempty")

    spec = None
    if mode == "mpc_one_step":
        overrides = dict(ocp_overrides or {})
        spec = OcpSpec(
            horizon=1,
            stage=stage,
            terminal=LearnedTerminal(basis=basis, theta=theta),
            bounds=bounds,
            grid=grid,
            params=params,
            **overrides,
        )

    violations = []
    failures = 0
    for i in range(m):
        x = states[i]
        if mode == "expert_action":
            u = float(np.asarray(inputs[i]).reshape(-1)[0])
        else:
            u0, _, diag = mpc_step(spec, x)
            if diag.status == "numeric_error":
                failures += 1
                continue
            u = float(u0[0])
        x_plus = hold_step(x, np.array([u]), grid, params)
        v_x = evaluate(basis, theta, x)
        v_plus = evaluate(basis, theta, x_plus)
        residual = v_plus - v_x + stage(x, np.array([u]))
        if residual > tol * (1.0 + abs(v_x)):
            violations.append((i, x.copy(), float(residual)))
    checked = m - failures
    return ViolationReport(
        mode=mode,
        m_test=checked,
        eps_hat=len(violations) / checked if checked else 0.0,
        violations=violations,
        tolerance=tol,
        solver_failures=failures,
    )


def simulate_closed_loop(
    policy: OcpSpec,
    x0,
    steps: int = 100,
    conv_tol: float = 0.02,
    plant_bounds: Optional[Bounds] = None,
) -> ClosedLoopRun:
    """Alternate MPC solve and plant step; stops once the state enters the
    conv_tol ball around the setpoint or the step budget runs out.

    `plant_bounds` (default: the policy's bounds) defines the state box used
    for the reported constraint excess.
    """
    if steps < 1:
        raise ValueError("need at least one step")
    box = plant_bounds if plant_bounds is not None else policy.bounds
    x = np.asarray(x0, dtype=float).copy()
    x_sp = policy.stage.x_sp
    xs = [x.copy()]
    us = []
    times = []
    cost = 0.0
    warm = None
    converged = False
    steps_to_converge = None
    status = "ok"
    if np.linalg.norm(x - x_sp) <= conv_tol:
        converged, steps_to_converge = True, 0
    else:
        for t in range(steps):
            u0, _, diag = mpc_step(policy, x, warm=warm)
            if diag.status == "numeric_error":
                status = "numeric_error"
                break
            warm = shift_warm_start(diag.u_seq)
            cost += policy.stage(x, u0)
            x = hold_step(x, u0, policy.grid, policy.params)
            us.append(float(u0[0]))
            xs.append(x.copy())
            times.append(diag.solve_time)
            if np.linalg.norm(x - x_sp) <= conv_tol:
                converged, steps_to_converge = True, t + 1
                break
    x_traj = np.array(xs)
    excess = np.maximum(box.x_lo - x_traj, 0.0) + np.maximum(x_traj - box.x_hi, 0.0)
    return ClosedLoopRun(
        x_traj=x_traj,
        u_traj=np.array(us),
        stage_cost_sum=cost,
        converged=converged,
        steps_to_converge=steps_to_converge,
        solve_times=np.array(times),
        constraint_violation_max=float(excess.max()) if excess.size else 0.0,
        status=status,
    )


def boundary_initial_conditions(bounds: Bounds) -> np.ndarray:
    """Twelve equispaced points on the boundary of the state box: four per
    horizontal edge, two per vertical edge."""
    lo, hi = bounds.x_lo, bounds.x_hi
    pts = []
    for frac in (1 / 5, 2 / 5, 3 / 5, 4 / 5):
        x1 = lo[0] + frac * (hi[0] - lo[0])
        pts.append([x1, lo[1]])
        pts.append([x1, hi[1]])
    for frac in (1 / 3, 2 / 3):
        x2 = lo[1] + frac * (hi[1] - lo[1])
        pts.append([lo[0], x2])
        pts.append([hi[0], x2])
    return np.array(pts)


@dataclass
class PolicyComparison:
    labels: list
    runs: dict  # label -> list[ClosedLoopRun]

    def aggregate(self) -> dict:
        out = {}
        for label in self.labels:
            runs = self.runs[label]
            all_times = np.concatenate([r.solve_times for r in runs if r.solve_times.size])
            out[label] = {
                "runs": len(runs),
                "converged": sum(r.converged for r in runs),
                "total_cost": float(sum(r.stage_cost_sum for r in runs)),
                "avg_solve_ms": float(all_times.mean() * 1e3) if all_times.size else float("nan"),
                "max_solve_ms": float(all_times.max() * 1e3) if all_times.size else float("nan"),
                "max_constraint_violation": float(
                    max(r.constraint_violation_max for r in runs)
                ),
            }
        return out


def compare_policies(
    expert: OcpSpec,
    proposed: OcpSpec,
    x0_list,
    steps: int = 100,
    conv_tol: float = 0.02,
    plant_bounds: Optional[Bounds] = None,
) -> PolicyComparison:
    """Closed-loop runs of both policies from each initial condition."""
    runs = {"expert": [], "proposed": []}
    for x0 in np.asarray(x0_list, dtype=float):
        runs["expert"].append(
            simulate_closed_loop(expert, x0, steps, conv_tol, plant_bounds=plant_bounds)
        )
        runs["proposed"].append(
            simulate_closed_loop(proposed, x0, steps, conv_tol, plant_bounds=plant_bounds)
        )
    return PolicyComparison(labels=["expert", "proposed"], runs=runs)


def adaptation_experiment(
    expert: OcpSpec,
    proposed: OcpSpec,
    tightened_x2_lo: float,
    x0_list,
    steps: int = 100,
    conv_tol: float = 0.02,
) -> PolicyComparison:
    """Rerun both policies with the x2 lower bound tightened (soft), leaving
    the learned terminal cost untouched."""
    tight = expert.bounds.with_x_lo(1, tightened_x2_lo)
    expert_t = dc_replace(expert, bounds=tight)
    proposed_t = dc_replace(proposed, bounds=tight)
    x0_list = np.asarray(x0_list, dtype=float)
    # initial conditions below the new bound would start infeasible; clip them
    x0_list = np.column_stack(
        [x0_list[:, 0], np.maximum(x0_list[:, 1], tightened_x2_lo)]
    )
    return compare_policies(
        expert_t, proposed_t, x0_list, steps, conv_tol, plant_bounds=tight
    )
