"""Uniform state sampling, expert demonstration generation and persistence.

Each demonstration tuple is (state, expert input at that state, expert
optimal value). Sampling uses one RNG stream per sample index so the result
is independent of evaluation order and of the worker count.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dynamics import Bounds
from .ocp import OcpSpec, solve_ocp

# An expert solve counts as failed when it hits a numeric error or stops far
# from stationarity (relative to the objective scale); failed tuples are kept
# in the file but excluded from training rows.
FAILURE_STATIONARITY = 1e-4


@dataclass
class DemoTuple:
    x: np.ndarray
    u: np.ndarray
    j_value: float
    solver_status: str


@dataclass
class DemoSet:
    tuples: list
    seed: int
    box: Bounds
    expert_config_digest: str
    created: str

    def __len__(self):
        return len(self.tuples)

    def converged(self) -> "DemoSet":
        kept = [t for t in self.tuples if t.solver_status == "converged"]
        return DemoSet(kept, self.seed, self.box, self.expert_config_digest, self.created)

    def arrays(self):
        """(states (M,2), inputs (M,), values (M,)) of converged tuples."""
        conv = [t for t in self.tuples if t.solver_status == "converged"]
        X = np.array([t.x for t in conv])
        U = np.array([t.u[0] for t in conv])
        J = np.array([t.j_value for t in conv])
        return X, U, J

    def subsample(self, m: int, seed: int) -> "DemoSet":
        """Seeded draw of m converged tuples without replacement."""
        conv = [t for t in self.tuples if t.solver_status == "converged"]
        if m > len(conv):
            raise ValueError(f"requested {m} tuples but only {len(conv)} converged")
        rng = np.random.default_rng(seed)
        idx = rng.choice(len(conv), size=m, replace=False)
        picked = [conv[int(i)] for i in np.sort(idx)]
        return DemoSet(picked, self.seed, self.box, self.expert_config_digest, self.created)


class TooManyFailuresError(RuntimeError):
    pass


def sample_uniform_states(count: int, box: Bounds, seed: int) -> np.ndarray:
    """count i.i.d. uniform draws from the state box, one RNG stream per
    index."""
    if count < 0:
        raise ValueError("count must be nonnegative")
    out = np.empty((count, box.x_lo.size))
    for i in range(count):
        rng = np.random.default_rng([seed, i])
        out[i] = rng.uniform(box.x_lo, box.x_hi)
    return out


def config_digest(spec: OcpSpec) -> str:
    """Content hash of the fields that determine the expert's output."""
    payload = {
        "horizon": spec.horizon,
        "q_weight": spec.stage.q_weight.tolist(),
        "r_weight": spec.stage.r_weight,
        "x_sp": spec.stage.x_sp.tolist(),
        "u_sp": spec.stage.u_sp.tolist(),
        "terminal": type(spec.terminal).__name__,
        "x_lo": spec.bounds.x_lo.tolist(),
        "x_hi": spec.bounds.x_hi.tolist(),
        "u_lo": spec.bounds.u_lo.tolist(),
        "u_hi": spec.bounds.u_hi.tolist(),
        "h": spec.grid.h,
        "t_s": spec.grid.t_s,
        "params": spec.params.as_tuple(),
        "soft_state_weight": spec.soft_state_weight,
        "solver_tol": spec.solver_tol,
        "max_iters": spec.max_iters,
    }
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _solve_one(args):
    spec, x = args
    sol = solve_ocp(spec, x)
    if sol.status == "numeric_error" or not np.isfinite(sol.value):
        status = "numeric_error"
    elif sol.status == "converged":
        status = "converged"
    elif sol.stationarity <= FAILURE_STATIONARITY * (1.0 + abs(sol.value)):
        status = "converged"
    else:
        status = "max_iters"
    return DemoTuple(x=np.asarray(x), u=sol.u_seq[:1].copy(), j_value=float(sol.value), solver_status=status)


def generate_demos(
    states,
    expert: OcpSpec,
    seed: int = 0,
    jobs: int = 1,
    max_failure_fraction: float = 0.01,
) -> DemoSet:
    """Solve the expert OCP at every state; aggregate ordered by index.

    Fails the run if more than `max_failure_fraction` of the solves fail.
    """
    states = np.asarray(states, dtype=float)
    work = [(expert, states[i]) for i in range(states.shape[0])]
    if jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            tuples = list(pool.map(_solve_one, work, chunksize=max(1, len(work) // (4 * jobs))))
    else:
        tuples = [_solve_one(w) for w in work]
    failures = sum(1 for t in tuples if t.solver_status != "converged")
    if len(tuples) and failures / len(tuples) > max_failure_fraction:
        raise TooManyFailuresError(
            f"{failures}/{len(tuples)} expert solves failed (> {max_failure_fraction:.0%})"
        )
    return DemoSet(
        tuples=tuples,
        seed=seed,
        box=expert.bounds,
        expert_config_digest=config_digest(expert),
        created=time.strftime("%Y-%m-%dT%H:%M:%S"),
    )


def save_demos(demo_set: DemoSet, path) -> None:
    """CSV with 17-significant-digit decimals plus a metadata sidecar JSON."""
    path = str(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x1", "x2", "u", "j", "status"])
        for t in demo_set.tuples:
            writer.writerow(
                [
                    _fmt(t.x[0]),
                    _fmt(t.x[1]),
                    _fmt(t.u[0]),
                    _fmt(t.j_value),
                    t.solver_status,
                ]
            )
    meta = {
        "seed": demo_set.seed,
        "box": {
            "x_lo": demo_set.box.x_lo.tolist(),
            "x_hi": demo_set.box.x_hi.tolist(),
            "u_lo": demo_set.box.u_lo.tolist(),
            "u_hi": demo_set.box.u_hi.tolist(),
        },
        "expert_config_digest": demo_set.expert_config_digest,
        "created": demo_set.created,
        "count": len(demo_set.tuples),
        "failures": sum(1 for t in demo_set.tuples if t.solver_status != "converged"),
    }
    with open(_meta_path(path), "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def load_demos(path, expert_config: Optional[OcpSpec] = None):
    """Load a dataset CSV (+ sidecar). Returns (DemoSet, warnings list)."""
    path = str(path)
    warnings = []
    tuples = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["x1", "x2", "u", "j", "status"]:
            raise ValueError(f"malformed header: {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != 5:
                raise ValueError(f"line {lineno}: expected 5 columns, got {len(row)}")
            x1, x2, u, j = (float(v) for v in row[:4])
            if not all(np.isfinite(v) for v in (x1, x2, u, j)):
                raise ValueError(f"line {lineno}: non-finite field")
            tuples.append(
                DemoTuple(x=np.array([x1, x2]), u=np.array([u]), j_value=j, solver_status=row[4])
            )
    try:
        with open(_meta_path(path)) as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        meta = {}
        warnings.append("metadata sidecar missing")
    box = Bounds(**{k: np.array(v) for k, v in meta.get("box", {}).items()}) if meta.get("box") else Bounds()
    digest = meta.get("expert_config_digest", "")
    if expert_config is not None and digest and config_digest(expert_config) != digest:
        warnings.append("expert config digest mismatch: dataset was generated by a different config")
    ds = DemoSet(
        tuples=tuples,
        seed=meta.get("seed", -1),
        box=box,
        expert_config_digest=digest,
        created=meta.get("created", ""),
    )
    return ds, warnings


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _meta_path(path: str) -> str:
    base = path[:-4] if path.endswith(".csv") else path
    return base + ".meta.json"
