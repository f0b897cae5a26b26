"""File formats, configuration validation, CLI runs and sweeps."""

import json

import numpy as np
import pytest

from mfgflow import fieldio
from mfgflow.cli import main, run
from mfgflow.config import load_config
from mfgflow.errors import ConfigError
from mfgflow.spectral import Grid
from mfgflow.timestep import FieldTrajectory, TimeWindow


class TestFieldDump:
    @pytest.mark.parametrize("dim", [1, 2])
    def test_round_trip_bitwise(self, tmp_path, dim):
        g = Grid(dim, 3.0, 16)
        rng = np.random.default_rng(0)
        arrays = rng.standard_normal((4, *g.shape))
        path = tmp_path / "f.bin"
        fieldio.write_field_dump(path, g, arrays)
        g2, back = fieldio.read_field_dump(path)
        assert g2 == g
        assert np.array_equal(back, arrays)

    def test_magic_check(self, tmp_path):
        path = tmp_path / "bad.bin"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ConfigError):
            fieldio.read_field_dump(path)

    @pytest.mark.parametrize("dim", [1, 2])
    def test_csv_round_trip(self, tmp_path, dim):
        g = Grid(dim, 3.0, 16)
        rng = np.random.default_rng(1)
        vals = rng.standard_normal(g.shape) * 1e3
        path = tmp_path / "f.csv"
        fieldio.write_field_csv(path, g, vals)
        back = fieldio.read_field_csv(path, g)
        assert np.array_equal(back, vals)  # 17 significant digits round-trip

    def test_trajectory_round_trip(self, tmp_path):
        g = Grid(1, 3.0, 16)
        w = TimeWindow(0.0, 1.0, 0.1)
        data = np.random.default_rng(2).standard_normal((11, 16))
        traj = FieldTrajectory(g, w, data)
        fieldio.write_trajectory(tmp_path / "q", traj)
        back = fieldio.read_trajectory(tmp_path / "q")
        assert np.array_equal(back.data, traj.data)
        assert back.window == w and back.stride == 1

    def test_ensemble_round_trip(self, tmp_path):
        pos = np.random.default_rng(3).uniform(-1, 1, (37, 2))
        fieldio.write_ensemble(tmp_path / "e.bin", pos)
        back = fieldio.read_ensemble(tmp_path / "e.bin")
        assert np.array_equal(back, pos)


class TestConfig:
    def test_defaults_match_reference_setup(self):
        cfg = load_config()
        assert cfg.model["nu"] == 0.5
        assert cfg.model["L"] == 10.0
        assert cfg.model["J"] == 256
        assert cfg.model["dt"] == 1e-3
        assert cfg.model["T"] == 10.0
        assert cfg.tree["cost"]["gamma"] == 0.2
        assert cfg.tree["cost"]["a_i"] == -5.0
        assert cfg.tree["cost"]["a_f"] == 5.0

    def test_2d_desk_scale_defaults(self):
        cfg = load_config(overrides=["model.dim=2"])
        assert cfg.model["J"] == 64
        assert cfg.model["dt"] == 5e-3
        assert cfg.solver["stride"] == 10

    def test_file_and_overrides(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("model:\n  J: 128\ncost:\n  kind: l2\n")
        cfg = load_config(p, overrides=["model.nu=0.7", "solver.mode=mfg1"])
        assert cfg.model["J"] == 128
        assert cfg.model["nu"] == 0.7
        assert cfg.tree["cost"]["kind"] == "l2"
        assert cfg.mode == "mfg1"

    def test_json_also_accepted(self, tmp_path):
        p = tmp_path / "c.json"
        p.write_text(json.dumps({"model": {"J": 64}}))
        assert load_config(p).model["J"] == 64

    def test_missing_field_named(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("model:\n  nu: null\n")
        with pytest.raises(ConfigError, match="model.nu"):
            load_config(p)

    def test_unknown_field_rejected(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("model:\n  viscosity: 1.0\n")
        with pytest.raises(ConfigError, match="viscosity"):
            load_config(p)

    def test_bad_type_named(self):
        with pytest.raises(ConfigError, match="model.J"):
            load_config(overrides=["model.J=fine"])


def fast_overrides(mode, T=0.2, J=32, dt=5e-3, extra=()):
    base = [
        f"model.J={J}",
        f"model.dt={dt}",
        f"model.T={T}",
        "output.stride=10",
        "solver.n_max=2",
        "solver.eps=1e-6",
        "solver.mu_grid=5",
        "solver.initializer=zero-control",
        "sde.n=200",
        "cost.kind=l2",
    ]
    return [*base, *extra]


class TestCli:
    def test_missing_field_exit_code(self, tmp_path, capsys):
        p = tmp_path / "c.yaml"
        p.write_text("model:\n  nu: null\n")
        code = main(["mfg1", "--config", str(p), "--out", str(tmp_path / "r")])
        assert code == 2
        assert "model.nu" in capsys.readouterr().err

    def test_steady_check_writes_manifest(self, tmp_path):
        out = tmp_path / "run"
        code = main(
            ["steady-check", "--out", str(out)]
            + [f"--override={o}" for o in fast_overrides("steady-check", J=256, dt=1e-3, T=0.05)]
        )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        d = manifest["diagnostics"]
        assert d["residual_analytic"] < 1e-6
        assert d["defect_model_gap"] < 1e-6
        assert d["residual"] == pytest.approx(0.1, rel=0.05)
        assert (out / "timing.json").exists()

    def test_mfg1_run_and_rerun_bitwise(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            code = main(
                ["mfg1", "--out", str(out)]
                + [f"--override={o}" for o in fast_overrides("mfg1")]
            )
            assert code == 0
            outs.append(out)
        m1 = (outs[0] / "manifest.json").read_text()
        m2 = (outs[1] / "manifest.json").read_text()
        # wall time lives in timing.json, so manifests are bitwise identical
        assert m1.replace(str(outs[0]), "") == m2.replace(str(outs[1]), "")
        b1 = (outs[0] / "fields" / "rho.bin").read_bytes()
        b2 = (outs[1] / "fields" / "rho.bin").read_bytes()
        assert b1 == b2

    def test_mfg2_outputs(self, tmp_path):
        import warnings

        out = tmp_path / "run"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            code = main(
                ["mfg2", "--out", str(out)]
                + [f"--override={o}" for o in fast_overrides("mfg2")]
            )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert len(manifest["loss_history"]) >= 2
        hist = manifest["loss_history"]
        assert all(b <= a + 1e-12 * abs(a) for a, b in zip(hist, hist[1:]))
        assert (out / "iterations.csv").exists()
        assert (out / "gmu.csv").exists()
        rows = (out / "iterations.csv").read_text().strip().splitlines()
        assert len(rows) == 1 + len(manifest["mu_history"])

    def test_mfg1_sde_with_reference(self, tmp_path):
        import warnings

        ref = tmp_path / "pde"
        assert main(["mfg1", "--out", str(ref)] + [f"--override={o}" for o in fast_overrides("mfg1")]) == 0
        out = tmp_path / "sde"
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            code = main(
                ["mfg1-sde", "--out", str(out), "--seed", "5"]
                + [f"--override={o}" for o in fast_overrides("mfg1-sde", extra=(f"reference={ref}",))]
            )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["diagnostics"]["l1_terminal_vs_reference"] >= 0.0
        assert manifest["config"]["sde"]["seed"] == 5

    def test_sample_mode(self, tmp_path):
        out = tmp_path / "s"
        code = main(["sample", "--out", str(out), "--override", "sde.n=50", "--override", "model.J=32"])
        assert code == 0
        pos = fieldio.read_ensemble(out / "fields" / "ensemble.bin")
        assert pos.shape == (50, 1)

    def test_sweep_aggregate(self, tmp_path):
        out = tmp_path / "sw"
        code = main(
            ["sweep", "--axis", "solver.start_time", "--values", "0.0,0.1", "--out", str(out)]
            + [f"--override={o}" for o in fast_overrides("mfg2", T=0.2)]
            + ["--override", "solver.mode=mfg1"]
        )
        assert code == 0
        rows = (out / "sweep.csv").read_text().strip().splitlines()
        assert len(rows) == 3
        assert (out / "start_time_0.0" / "manifest.json").exists()
        assert (out / "start_time_0.1" / "manifest.json").exists()

    def test_sweep_empty_values(self, tmp_path):
        code = main(["sweep", "--axis", "model.J", "--values", " ", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_echoed_config_reproduces_run(self, tmp_path):
        # a run directory is self-describing: rerunning from the echoed
        # config reproduces the numeric outputs bitwise
        import yaml

        first = tmp_path / "first"
        assert main(["mfg1", "--out", str(first)] + [f"--override={o}" for o in fast_overrides("mfg1")]) == 0
        manifest = json.loads((first / "manifest.json").read_text())
        echo_path = tmp_path / "echo.yaml"
        echoed = manifest["config"]
        echoed["output"]["dir"] = str(tmp_path / "second")
        echo_path.write_text(yaml.safe_dump(echoed))
        assert main(["mfg1", "--config", str(echo_path)]) == 0
        a = (first / "fields" / "rho.bin").read_bytes()
        b = (tmp_path / "second" / "fields" / "rho.bin").read_bytes()
        assert a == b

    def test_tracer_substitution_reporting(self, tmp_path):
        out = tmp_path / "rt"
        code = main(
            ["mfg1", "--out", str(out)]
            + [f"--override={o}" for o in fast_overrides("mfg1", extra=("cost.report_tracer_substitution=true",))]
        )
        assert code == 0
        manifest = json.loads((out / "manifest.json").read_text())
        sub = manifest["diagnostics"]["cost_tracer_substitution"]
        assert set(sub) == {"terminal", "running_state", "running_control", "total"}
        # the substituted breakdown shares the control term with the literal one
        assert sub["running_control"] == pytest.approx(manifest["cost"]["running_control"], rel=1e-12)

    def test_sde_particle_count_sweep_l1_decreasing(self, tmp_path):
        # needs a grid fine enough that the KDE bias sits below the Monte
        # Carlo error at the smallest N
        opts = fast_overrides("mfg1", J=128, dt=2e-3)
        ref = tmp_path / "pde"
        assert main(["mfg1", "--out", str(ref)] + [f"--override={o}" for o in opts]) == 0
        out = tmp_path / "nsweep"
        code = main(
            ["sweep", "--axis", "sde.n", "--values", "100,1000,10000", "--out", str(out), "--seed", "11"]
            + [f"--override={o}" for o in opts]
            + ["--override", f"reference={ref}", "--override", "solver.mode=mfg1-sde"]
        )
        assert code == 0
        rows = (out / "sweep.csv").read_text().strip().splitlines()[1:]
        l1s = [float(r.split(",")[4]) for r in rows]
        assert l1s[2] < l1s[1] < l1s[0]

    def test_solver_error_writes_record(self, tmp_path):
        out = tmp_path / "boom"
        code = main(
            ["mfg1", "--out", str(out)]
            + [f"--override={o}" for o in fast_overrides("mfg1", extra=("model.nu=1e-9", "model.dt=0.05", "flow_state.sigma=9.0"))]
        )
        if code != 0:
            record = json.loads((out / "error.json").read_text())
            assert "type" in record["error"]
