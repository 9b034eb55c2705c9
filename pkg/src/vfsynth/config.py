"""JSON run configuration and the self-contained model artifact.

Every config field defaults to the benchmark values; unknown keys are
rejected so typos fail loudly instead of silently using a default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .dynamics import Bounds, ModelParams, SimGrid
from .ocp import (
    LearnedTerminal,
    OcpSpec,
    QuadraticTerminal,
    StageCost,
    ZeroTerminal,
)
from .synthesis import ScenarioCertificate
from .value_function import Basis, BasisSpec


class ConfigError(ValueError):
    pass


_TERMINALS = {"quadratic": QuadraticTerminal, "zero": ZeroTerminal}


@dataclass
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    bounds: Bounds = field(default_factory=Bounds)
    grid: SimGrid = field(default_factory=SimGrid)
    stage: StageCost = field(default_factory=StageCost)
    basis: BasisSpec = field(default_factory=BasisSpec)
    expert_horizon: int = 50
    expert_terminal: str = "quadratic"
    proposed_horizon: int = 1
    soft_state_weight: float = 1e4
    solver_tol: float = 1e-8
    max_iters: int = 500
    multistart_grid: int = 21
    reg: float = 1e-8
    eps: float = 0.2
    beta: float = 1e-10
    data_seed: int = 0
    test_seed: int = 1
    subsample_seed: int = 2

    def expert_spec(self) -> OcpSpec:
        terminal = _TERMINALS[self.expert_terminal]()
        return OcpSpec(
            horizon=self.expert_horizon,
            stage=self.stage,
            terminal=terminal,
            bounds=self.bounds,
            grid=self.grid,
            params=self.model,
            soft_state_weight=self.soft_state_weight,
            solver_tol=self.solver_tol,
            max_iters=self.max_iters,
        )

    def proposed_spec(self, basis: Basis, theta) -> OcpSpec:
        return OcpSpec(
            horizon=self.proposed_horizon,
            stage=self.stage,
            terminal=LearnedTerminal(basis=basis, theta=np.asarray(theta, dtype=float)),
            bounds=self.bounds,
            grid=self.grid,
            params=self.model,
            soft_state_weight=self.soft_state_weight,
            solver_tol=self.solver_tol,
            max_iters=self.max_iters,
            multistart_grid=self.multistart_grid,
        )


def _take(section: dict, name: str, allowed: set) -> dict:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return section


def load_config(path) -> RunConfig:
    with open(path) as fh:
        raw = json.load(fh)
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    top_allowed = {
        "model", "bounds", "grid", "stage", "basis", "expert", "proposed",
        "certificate", "seeds", "reg",
    }
    _take(raw, "config", top_allowed)
    cfg = RunConfig()
    try:
        if "model" in raw:
            sec = _take(raw["model"], "model", {"tau", "k_rate", "b_act", "x_f", "x_c", "a_coef"})
            cfg.model = ModelParams(**sec)
        if "bounds" in raw:
            sec = _take(raw["bounds"], "bounds", {"x_lo", "x_hi", "u_lo", "u_hi"})
            cfg.bounds = Bounds(**{k: np.array(v, dtype=float) for k, v in sec.items()})
        if "grid" in raw:
            sec = _take(raw["grid"], "grid", {"h", "t_s"})
            cfg.grid = SimGrid(**sec)
        if "stage" in raw:
            sec = _take(raw["stage"], "stage", {"q_weight", "r_weight", "x_sp", "u_sp"})
            kw = dict(sec)
            for key in ("q_weight", "x_sp", "u_sp"):
                if key in kw:
                    kw[key] = np.array(kw[key], dtype=float)
            cfg.stage = StageCost(**kw)
        if "basis" in raw:
            sec = _take(
                raw["basis"], "basis",
                {"kind", "d", "center_strategy", "width_factor", "seed", "degree", "include_bias"},
            )
            cfg.basis = BasisSpec(**sec)
        if "expert" in raw:
            sec = _take(raw["expert"], "expert", {"horizon", "terminal"})
            cfg.expert_horizon = int(sec.get("horizon", cfg.expert_horizon))
            cfg.expert_terminal = sec.get("terminal", cfg.expert_terminal)
            if cfg.expert_terminal not in _TERMINALS:
                raise ConfigError(f"unknown expert terminal {cfg.expert_terminal!r}")
        if "proposed" in raw:
            sec = _take(
                raw["proposed"], "proposed",
                {"horizon", "soft_state_weight", "solver_tol", "max_iters", "multistart_grid"},
            )
            cfg.proposed_horizon = int(sec.get("horizon", cfg.proposed_horizon))
            cfg.soft_state_weight = float(sec.get("soft_state_weight", cfg.soft_state_weight))
            cfg.solver_tol = float(sec.get("solver_tol", cfg.solver_tol))
            cfg.max_iters = int(sec.get("max_iters", cfg.max_iters))
            cfg.multistart_grid = int(sec.get("multistart_grid", cfg.multistart_grid))
        if "certificate" in raw:
            sec = _take(raw["certificate"], "certificate", {"eps", "beta"})
            cfg.eps = float(sec.get("eps", cfg.eps))
            cfg.beta = float(sec.get("beta", cfg.beta))
        if "seeds" in raw:
            sec = _take(raw["seeds"], "seeds", {"data", "test", "subsample"})
            cfg.data_seed = int(sec.get("data", cfg.data_seed))
            cfg.test_seed = int(sec.get("test", cfg.test_seed))
            cfg.subsample_seed = int(sec.get("subsample", cfg.subsample_seed))
        if "reg" in raw:
            cfg.reg = float(raw["reg"])
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc
    return cfg


def save_artifact(
    path,
    basis: Basis,
    theta,
    certificate: ScenarioCertificate,
    mse: float,
    max_residual: float,
    status: str,
    data_digest: str,
    seed: int,
) -> None:
    """Write the self-contained model artifact JSON."""
    if basis.kind != "gaussian_rbf":
        raise ValueError("artifact serialization currently covers the RBF basis")
    payload = {
        "basis": {
            "kind": basis.kind,
            "centers": np.asarray(basis.centers).tolist(),
            "widths": np.asarray(basis.widths).tolist(),
        },
        "theta": np.asarray(theta, dtype=float).tolist(),
        "certificate": {
            "eps": certificate.eps,
            "beta": certificate.beta,
            "m": certificate.m_samples,
            "d": certificate.dim,
        },
        "diagnostics": {
            "mse": float(mse),
            "max_residual": float(max_residual),
            "status": status,
        },
        "provenance": {
            "data_digest": data_digest,
            "seed": int(seed),
            "version": __version__,
        },
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_artifact(path):
    """Read an artifact; returns (Basis, theta, ScenarioCertificate, dict)."""
    with open(path) as fh:
        payload = json.load(fh)
    b = payload["basis"]
    basis = Basis(
        kind=b["kind"],
        centers=np.array(b["centers"], dtype=float),
        widths=np.array(b["widths"], dtype=float),
    )
    theta = np.array(payload["theta"], dtype=float)
    c = payload["certificate"]
    cert = ScenarioCertificate(eps=c["eps"], beta=c["beta"], m_samples=c["m"], dim=c["d"])
    return basis, theta, cert, payload
