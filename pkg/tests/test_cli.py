"""Command-line interface: subcommands, exit codes, file outputs."""

import json

import numpy as np
import pytest

from vfsynth.cli import main
from vfsynth.config import save_artifact
from vfsynth.dynamics import X_SP
from vfsynth.synthesis import ScenarioCertificate
from vfsynth.value_function import BasisSpec, fit_basis


@pytest.fixture()
def small_artifact(tmp_path):
    rng = np.random.default_rng(0)
    states = rng.uniform([0.0632, 0.4519], [0.4632, 0.8519], (150, 2))
    basis = fit_basis(BasisSpec(d=10, seed=0), states=states)
    theta = rng.normal(scale=0.05, size=10)
    path = tmp_path / "model.json"
    cert = ScenarioCertificate(eps=0.2, beta=1e-10, m_samples=683, dim=10)
    save_artifact(
        path, basis, theta, cert,
        mse=0.1, max_residual=0.0, status="optimal", data_digest="", seed=0,
    )
    return path


@pytest.fixture()
def fast_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"expert": {"horizon": 1, "terminal": "quadratic"}}))
    return path


class TestSampleSize:
    def test_benchmark_value(self, capsys):
        rc = main(["sample-size", "--eps", "0.2", "--beta", "1e-10", "--dim", "75", "--json"])
        assert rc == 0
        out = json.loads(capsys.readouterr().out)
        assert out["m"] == 683
        assert out["achieved_beta"] <= 1e-10

    def test_trivial_value(self, capsys):
        rc = main(["sample-size", "--eps", "0.5", "--beta", "0.5", "--dim", "1"])
        assert rc == 0
        assert "m: 1" in capsys.readouterr().out

    def test_domain_error_exit(self, capsys):
        rc = main(["sample-size", "--eps", "1.5", "--beta", "0.5", "--dim", "1"])
        assert rc == 2
        assert "error" in capsys.readouterr().err


class TestGenData:
    def test_small_run(self, tmp_path, fast_config, capsys):
        out = tmp_path / "d.csv"
        rc = main(
            ["gen-data", "--count", "3", "--seed", "0", "--out", str(out),
             "--config", str(fast_config), "--jobs", "1", "--json"]
        )
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["count"] == 3
        lines = out.read_text().splitlines()
        assert lines[0] == "x1,x2,u,j,status"
        assert len(lines) == 4
        for line in lines[1:]:
            assert float(line.split(",")[3]) >= 0.0

    def test_byte_identical_reruns(self, tmp_path, fast_config):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        for out in (a, b):
            rc = main(
                ["gen-data", "--count", "3", "--seed", "4", "--out", str(out),
                 "--config", str(fast_config), "--jobs", "1"]
            )
            assert rc == 0
        assert a.read_bytes() == b.read_bytes()


class TestSynth:
    def test_too_small_dataset(self, tmp_path, fast_config, capsys):
        data = tmp_path / "d.csv"
        main(
            ["gen-data", "--count", "2", "--seed", "0", "--out", str(data),
             "--config", str(fast_config), "--jobs", "1"]
        )
        capsys.readouterr()
        rc = main(
            ["synth", "--data", str(data), "--out", str(tmp_path / "m.json"),
             "--config", str(fast_config)]
        )
        assert rc == 2
        assert "requires M" in capsys.readouterr().err


class TestVerify:
    def test_expert_action_mode(self, tmp_path, small_artifact, fast_config, capsys):
        data = tmp_path / "d.csv"
        main(
            ["gen-data", "--count", "4", "--seed", "1", "--out", str(data),
             "--config", str(fast_config), "--jobs", "1"]
        )
        capsys.readouterr()
        rc = main(
            ["verify", "--artifact", str(small_artifact), "--data", str(data),
             "--mode", "expert_action", "--out-dir", str(tmp_path / "rep"), "--json"]
        )
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["m_test"] == 4
        assert 0.0 <= summary["eps_hat"] <= 1.0
        viol = (tmp_path / "rep" / "violations.csv").read_text().splitlines()
        assert viol[0] == "index,x1,x2,residual"


class TestSimulate:
    def test_from_setpoint(self, tmp_path, small_artifact, capsys):
        rc = main(
            ["simulate", "--artifact", str(small_artifact),
             "--x0", f"{X_SP[0]},{X_SP[1]}", "--steps", "5",
             "--out-dir", str(tmp_path / "sim"), "--json"]
        )
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["converged"] is True
        assert summary["steps_to_converge"] == 0
        traj = (tmp_path / "sim" / "trajectory.csv").read_text().splitlines()
        assert traj[0] == "step,x1,x2,u,stage_cost,solve_ms"


class TestCompareAdapt:
    def test_compare_writes_outputs(self, tmp_path, small_artifact, fast_config, capsys):
        out_dir = tmp_path / "cmp"
        rc = main(
            ["compare", "--artifact", str(small_artifact), "--steps", "3",
             "--config", str(fast_config), "--out-dir", str(out_dir), "--json"]
        )
        assert rc == 0
        agg = json.loads(capsys.readouterr().out)
        assert agg["expert"]["runs"] == 12
        assert agg["proposed"]["runs"] == 12
        assert (out_dir / "comparison.csv").exists()
        assert (out_dir / "comparison.json").exists()

    def test_adapt_noop_matches_compare(self, tmp_path, small_artifact, fast_config, capsys):
        rc1 = main(
            ["compare", "--artifact", str(small_artifact), "--steps", "3",
             "--config", str(fast_config), "--json"]
        )
        base = json.loads(capsys.readouterr().out)
        rc2 = main(
            ["adapt", "--artifact", str(small_artifact), "--x2-lo", "0.4519",
             "--steps", "3", "--config", str(fast_config), "--json"]
        )
        tight = json.loads(capsys.readouterr().out)
        assert rc1 == 0 and rc2 == 0
        assert base["proposed"]["total_cost"] == pytest.approx(
            tight["proposed"]["total_cost"], rel=1e-12
        )


class TestErrors:
    def test_missing_file(self, capsys):
        rc = main(["verify", "--artifact", "/nonexistent.json", "--data", "/nonexistent.csv"])
        assert rc == 2
        assert "error" in capsys.readouterr().err
