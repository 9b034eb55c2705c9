"""Shared fixtures.

The expensive pipeline artifacts (expert demonstration sets and the trained
model) are generated once per session and cached on disk under tests/_cache,
keyed by the expert configuration digest, so repeated test runs skip the
demonstration solves.
"""

import json
import os
import time
from pathlib import Path

import numpy as np
import pytest

from vfsynth.config import RunConfig
from vfsynth.dataset import (
    generate_demos,
    load_demos,
    sample_uniform_states,
    save_demos,
)
from vfsynth.evaluation import boundary_initial_conditions, compare_policies, simulate_closed_loop
from vfsynth.synthesis import QpProblem, assemble_qp, min_samples, solve_qp
from vfsynth.value_function import fit_basis

CACHE = Path(__file__).parent / "_cache"

# one verdict line per end-to-end criterion, printed after the test run
# (regular prints would be swallowed by output capture for passing tests)
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)

TRAIN_COUNT = 760
TEST_COUNT = 2000
POOL_COUNT = 3100


def _jobs() -> int:
    env = os.environ.get("VFSYNTH_JOBS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _demo_set(name: str, count: int, seed: int, cfg: RunConfig):
    CACHE.mkdir(exist_ok=True)
    path = CACHE / f"{name}.csv"
    expert = cfg.expert_spec()
    if path.exists():
        ds, warnings = load_demos(path, expert_config=expert)
        digest_ok = not any("digest" in w for w in warnings)
        if digest_ok and len(ds) == count and ds.seed == seed:
            return ds
    states = sample_uniform_states(count, cfg.bounds, seed)
    ds = generate_demos(states, expert, seed=seed, jobs=_jobs())
    save_demos(ds, path)
    return ds


@pytest.fixture(scope="session")
def run_config():
    return RunConfig()


@pytest.fixture(scope="session")
def train_demos(run_config):
    return _demo_set("train", TRAIN_COUNT, run_config.data_seed, run_config)


@pytest.fixture(scope="session")
def test_demos(run_config):
    return _demo_set("test", TEST_COUNT, run_config.test_seed, run_config)


@pytest.fixture(scope="session")
def trained_model(run_config, train_demos):
    """Synthesis at the certificate size M = min_samples(eps, beta, d).

    Returns a dict with the fitted basis, the result, the training arrays and
    the wall-clock time of the QP solve.
    """
    cfg = run_config
    m_req = min_samples(cfg.eps, cfg.beta, cfg.basis.d)
    subset = train_demos.converged().subsample(m_req, cfg.subsample_seed)
    X, U, J = subset.arrays()
    basis = fit_basis(cfg.basis, states=X)
    qp = assemble_qp(X, U, J, basis, cfg.stage, cfg.grid, cfg.model, reg=cfg.reg)
    t0 = time.perf_counter()
    result = solve_qp(qp)
    solve_seconds = time.perf_counter() - t0
    return {
        "basis": basis,
        "theta": result.theta,
        "result": result,
        "qp": qp,
        "m": m_req,
        "X": X,
        "U": U,
        "J": J,
        "solve_seconds": solve_seconds,
    }


@pytest.fixture(scope="session")
def adaptation_model(run_config):
    """Denser synthesis (eps = 0.05, M = 2842) used for the tightened-bound
    experiment; the coarser M = 683 fit rings too hard near the new bound."""
    cfg = run_config
    pool = _demo_set("train_big", POOL_COUNT, cfg.data_seed, cfg)
    m_req = min_samples(0.05, cfg.beta, cfg.basis.d)
    subset = pool.converged().subsample(m_req, cfg.subsample_seed)
    X, U, J = subset.arrays()
    basis = fit_basis(cfg.basis, states=X)
    qp = assemble_qp(X, U, J, basis, cfg.stage, cfg.grid, cfg.model, reg=cfg.reg)
    result = solve_qp(qp)
    return {"basis": basis, "theta": result.theta, "result": result, "m": m_req}


@pytest.fixture(scope="session")
def unconstrained_theta(trained_model):
    """Ridge regression on the same data with the descent rows removed."""
    qp = trained_model["qp"]
    d = qp.hessian.shape[0]
    free = QpProblem(
        hessian=qp.hessian,
        linear=qp.linear,
        constraint_matrix=np.zeros((0, d)),
        constraint_rhs=np.zeros(0),
        reg=qp.reg,
        const_term=qp.const_term,
        features=qp.features,
        values=qp.values,
    )
    result = solve_qp(free)
    return {"theta": result.theta, "mse": result.training_mse}


@pytest.fixture(scope="session")
def policy_comparison(run_config, trained_model):
    """Closed-loop runs of the expert and the learned-terminal controller
    from the twelve boundary initial conditions."""
    cfg = run_config
    expert = cfg.expert_spec()
    proposed = cfg.proposed_spec(trained_model["basis"], trained_model["theta"])
    ics = boundary_initial_conditions(cfg.bounds)
    return compare_policies(expert, proposed, ics, steps=100)


@pytest.fixture(scope="session")
def unconstrained_runs(run_config, trained_model, unconstrained_theta):
    """Convergence count of the unconstrained-fit controller (baseline)."""
    cfg = run_config
    policy = cfg.proposed_spec(trained_model["basis"], unconstrained_theta["theta"])
    ics = boundary_initial_conditions(cfg.bounds)
    return sum(
        simulate_closed_loop(policy, x0, steps=100).converged for x0 in ics
    )
