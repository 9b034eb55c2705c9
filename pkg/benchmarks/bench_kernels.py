"""Benchmark the compiled kernels against the pure-Python fallback.

Both backends are loaded directly (bypassing the import-time selection) and
timed on the three hot entry points at the benchmark problem sizes. Run:

    python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from vfsynth._kernels import BACKEND, fallback
from vfsynth.dynamics import ModelParams, SimGrid
from vfsynth.ocp import expert_spec, solve_ocp

try:
    from vfsynth._kernels import _core as compiled
except ImportError:
    compiled = None


def _time(fn, repeat=200):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(impl, label):
    params = ModelParams().as_tuple()
    grid = SimGrid()
    rng = np.random.default_rng(0)
    x0 = np.array([0.3, 0.7])
    u50 = rng.uniform(0.0, 2.0, 50)

    t_roll = _time(lambda: impl.rollout_fine(x0, u50, grid.h, grid.substeps, params))

    fine = impl.rollout_fine(x0, u50, grid.h, grid.substeps, params)
    term_grad = np.array([0.1, -0.2])
    t_grad = _time(
        lambda: impl.stage_value_and_gradient(
            fine, u50, grid.h, grid.substeps, params,
            1.0, 1.0, 1e-4, 0.2632, 0.6519, 0.7853,
            1e4, 0.0632, 0.4519, 0.4632, 0.8519, term_grad,
        )
    )

    t_jac = _time(
        lambda: impl.interval_rollout_jac(x0, 0.9, grid.h, grid.substeps, params)
    )

    print(
        f"{label:10s} rollout_fine(T=50): {t_roll * 1e6:8.1f} us   "
        f"adjoint sweep: {t_grad * 1e6:8.1f} us   "
        f"interval jacobian: {t_jac * 1e6:8.1f} us"
    )
    return t_roll, t_grad, t_jac


def bench_solver():
    spec = expert_spec()
    x0 = np.array([0.35, 0.55])
    t0 = time.perf_counter()
    sol = solve_ocp(spec, x0)
    print(
        f"full expert solve (T=50, active backend '{BACKEND}'): "
        f"{(time.perf_counter() - t0) * 1e3:.0f} ms, status {sol.status}"
    )


def main():
    print(f"active backend: {BACKEND}")
    py = bench_backend(fallback, "python")
    if compiled is not None:
        co = bench_backend(compiled, "compiled")
        names = ("rollout_fine", "adjoint sweep", "interval jacobian")
        for name, tp, tc in zip(names, py, co):
            print(f"  {name}: compiled is {tp / tc:.1f}x faster")
    else:
        print("compiled extension not available; only the fallback was timed")
    bench_solver()


if __name__ == "__main__":
    main()
