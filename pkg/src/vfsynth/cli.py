"""Command-line front end: sample-size, gen-data, synth, verify, simulate,
compare, adapt."""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .config import RunConfig, load_artifact, load_config, save_artifact
from .dataset import (
    generate_demos,
    load_demos,
    sample_uniform_states,
    save_demos,
)
from .evaluation import (
    adaptation_experiment,
    boundary_initial_conditions,
    compare_policies,
    simulate_closed_loop,
    verify_descent,
)
from .synthesis import (
    InfeasibleSynthesisError,
    ScenarioCertificate,
    assemble_qp,
    beta_bound,
    min_samples,
    solve_qp,
)
from .value_function import fit_basis


def _jobs(args) -> int:
    if getattr(args, "jobs", None):
        return args.jobs
    env = os.environ.get("VFSYNTH_JOBS")
    if env:
        return int(env)
    return os.cpu_count() or 1


def _config(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return RunConfig()


def _emit(args, summary: dict) -> None:
    if getattr(args, "json", False):
        print(json.dumps(summary, indent=2, default=float))
    else:
        for key, val in summary.items():
            print(f"{key}: {val}")


def _write_trajectory(path, run) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "x1", "x2", "u", "stage_cost", "solve_ms"])
        for t in range(len(run.u_traj)):
            writer.writerow(
                [
                    t,
                    f"{run.x_traj[t, 0]:.17g}",
                    f"{run.x_traj[t, 1]:.17g}",
                    f"{run.u_traj[t]:.17g}",
                    "",
                    f"{run.solve_times[t] * 1e3:.6g}",
                ]
            )
        last = len(run.u_traj)
        writer.writerow(
            [last, f"{run.x_traj[last, 0]:.17g}", f"{run.x_traj[last, 1]:.17g}", "", "", ""]
        )


def _write_violations(path, report) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "x1", "x2", "residual"])
        for idx, state, residual in report.violations:
            writer.writerow([idx, f"{state[0]:.17g}", f"{state[1]:.17g}", f"{residual:.17g}"])


def cmd_sample_size(args) -> int:
    m = min_samples(args.eps, args.beta, args.dim)
    achieved = beta_bound(args.eps, m, args.dim)
    _emit(args, {"m": m, "achieved_beta": achieved, "eps": args.eps, "beta": args.beta, "dim": args.dim})
    return 0


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    seed = args.seed if args.seed is not None else cfg.data_seed
    states = sample_uniform_states(args.count, cfg.bounds, seed)
    demo_set = generate_demos(states, cfg.expert_spec(), seed=seed, jobs=_jobs(args))
    save_demos(demo_set, args.out)
    failures = sum(1 for t in demo_set.tuples if t.solver_status != "converged")
    _emit(args, {"out": args.out, "count": len(demo_set), "failures": failures, "seed": seed})
    return 0


def cmd_synth(args) -> int:
    cfg = _config(args)
    eps = args.eps if args.eps is not None else cfg.eps
    beta = args.beta if args.beta is not None else cfg.beta
    seed = args.seed if args.seed is not None else cfg.subsample_seed
    demo_set, warnings = load_demos(args.data)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)

    required = min_samples(eps, beta, cfg.basis.d)
    conv = demo_set.converged()
    if len(conv) < required:
        print(
            f"error: dataset has {len(conv)} converged rows but "
            f"eps={eps}, beta={beta}, d={cfg.basis.d} requires M={required}",
            file=sys.stderr,
        )
        return 2

    subset = conv.subsample(required, seed)
    X, U, J = subset.arrays()
    basis = fit_basis(cfg.basis, states=X)
    qp = assemble_qp(X, U, J, basis, cfg.stage, cfg.grid, cfg.model, reg=cfg.reg)
    if args.no_descent:
        qp.constraint_matrix = np.zeros((0, qp.hessian.shape[0]))
        qp.constraint_rhs = np.zeros(0)
    try:
        result = solve_qp(qp)
    except InfeasibleSynthesisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    cert = ScenarioCertificate(eps=eps, beta=beta, m_samples=required, dim=cfg.basis.d)
    save_artifact(
        args.out,
        basis,
        result.theta,
        cert,
        mse=result.training_mse,
        max_residual=result.max_constraint_residual,
        status=result.status,
        data_digest=demo_set.expert_config_digest,
        seed=seed,
    )
    _emit(
        args,
        {
            "out": args.out,
            "m": required,
            "status": result.status,
            "training_mse": result.training_mse,
            "max_residual": result.max_constraint_residual,
            "active_constraints": result.active_count,
            "descent_constraints": not args.no_descent,
        },
    )
    return 0 if result.status == "optimal" else 4


def cmd_verify(args) -> int:
    cfg = _config(args)
    basis, theta, cert, _ = load_artifact(args.artifact)
    demo_set, warnings = load_demos(args.data)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    X, U, _ = demo_set.arrays()
    report = verify_descent(
        X, U, basis, theta,
        mode=args.mode, stage=cfg.stage, grid=cfg.grid, params=cfg.model,
        bounds=cfg.bounds,
    )
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_violations(out / "violations.csv", report)
    _emit(
        args,
        {
            "mode": report.mode,
            "m_test": report.m_test,
            "eps_hat": report.eps_hat,
            "violations": len(report.violations),
            "certificate_eps": cert.eps,
            "within_certificate": report.eps_hat <= cert.eps,
        },
    )
    return 0


def cmd_simulate(args) -> int:
    cfg = _config(args)
    basis, theta, _, _ = load_artifact(args.artifact)
    policy = cfg.proposed_spec(basis, theta)
    x0 = np.array([float(v) for v in args.x0.split(",")])
    run = simulate_closed_loop(policy, x0, steps=args.steps)
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        _write_trajectory(out / "trajectory.csv", run)
    _emit(
        args,
        {
            "converged": run.converged,
            "steps_to_converge": run.steps_to_converge,
            "stage_cost_sum": run.stage_cost_sum,
            "max_constraint_violation": run.constraint_violation_max,
            "status": run.status,
        },
    )
    return 0 if run.status == "ok" else 1


def _comparison_outputs(args, comparison) -> None:
    agg = comparison.aggregate()
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "comparison.json", "w") as fh:
            json.dump(agg, fh, indent=2)
            fh.write("\n")
        with open(out / "comparison.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["policy", "run", "converged", "steps_to_converge", "stage_cost_sum",
                 "avg_solve_ms", "max_constraint_violation"]
            )
            for label in comparison.labels:
                for i, run in enumerate(comparison.runs[label]):
                    avg_ms = run.solve_times.mean() * 1e3 if run.solve_times.size else float("nan")
                    writer.writerow(
                        [label, i, run.converged, run.steps_to_converge,
                         f"{run.stage_cost_sum:.17g}", f"{avg_ms:.6g}",
                         f"{run.constraint_violation_max:.17g}"]
                    )
        for label in comparison.labels:
            for i, run in enumerate(comparison.runs[label]):
                _write_trajectory(out / f"trajectory_{label}_{i:02d}.csv", run)
    _emit(args, agg)


def cmd_compare(args) -> int:
    cfg = _config(args)
    basis, theta, _, _ = load_artifact(args.artifact)
    x0_list = boundary_initial_conditions(cfg.bounds)
    comparison = compare_policies(
        cfg.expert_spec(), cfg.proposed_spec(basis, theta), x0_list, steps=args.steps
    )
    _comparison_outputs(args, comparison)
    return 0


def cmd_adapt(args) -> int:
    cfg = _config(args)
    basis, theta, _, _ = load_artifact(args.artifact)
    x0_list = boundary_initial_conditions(cfg.bounds)
    comparison = adaptation_experiment(
        cfg.expert_spec(), cfg.proposed_spec(basis, theta), args.x2_lo, x0_list,
        steps=args.steps,
    )
    _comparison_outputs(args, comparison)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vfsynth",
        description="Learn a terminal cost for short-horizon MPC with scenario certificates",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        p.add_argument("--json", action="store_true", help="machine-readable summary")
        if config:
            p.add_argument("--config", help="run configuration JSON")

    p = sub.add_parser("sample-size", help="required sample count for (eps, beta, dim)")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--dim", type=int, required=True)
    common(p, config=False)
    p.set_defaults(func=cmd_sample_size)

    p = sub.add_parser("gen-data", help="generate expert demonstration tuples")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int, default=None)
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("synth", help="solve the scenario synthesis QP")
    p.add_argument("--data", required=True)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--no-descent", action="store_true",
                   help="drop the descent constraints (baseline)")
    common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", help="empirical descent check on a dataset")
    p.add_argument("--artifact", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--mode", choices=["expert_action", "mpc_one_step"],
                   default="mpc_one_step")
    p.add_argument("--out-dir", default=None)
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("simulate", help="closed-loop run of the proposed MPC")
    p.add_argument("--artifact", required=True)
    p.add_argument("--x0", required=True, help="initial state, e.g. 0.1,0.8")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--out-dir", default=None)
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="expert vs proposed MPC from twelve boundary states")
    p.add_argument("--artifact", required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--out-dir", default=None)
    common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("adapt", help="rerun with a tightened x2 lower bound")
    p.add_argument("--artifact", required=True)
    p.add_argument("--x2-lo", type=float, required=True)
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--out-dir", default=None)
    common(p)
    p.set_defaults(func=cmd_adapt)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
