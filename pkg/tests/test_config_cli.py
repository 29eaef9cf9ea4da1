from __future__ import annotations

import json

import numpy as np
import pytest

from cases import smoke_case
from onsagerflow.cli import describe_models, main
from onsagerflow.config import RunConfig, builtin_initial_condition, parse_config, read_snapshot
from onsagerflow.errors import DomainViolation, NoConvergence, ParseError, UnknownProfile, ValidationError
from onsagerflow.grid import PeriodicGrid
from onsagerflow.models import PNP, FokkerPlanck, MaxwellStefan, SystemState
from onsagerflow.simulation import run_simulation, write_series, write_snapshot


def minimal_fp(**overrides):
    cfg = {
        "model": {"type": "fokker_planck", "beta": 1},
        "grid": {"dim": 1, "n": 8},
        "time": {"tau": 0.01, "steps": 10},
        "solver": {"method": "newton_kkt"},
    }
    for block, values in overrides.items():
        cfg.setdefault(block, {}).update(values)
    return cfg


def pnp_config(steps=3, **solver):
    return {
        "model": {"type": "pnp"},
        "grid": {"dim": 2, "n": 8},
        "time": {"tau": 1e-3, "steps": steps, "snapshot_every": 2},
        "solver": solver,
        "initial_condition": {"profile": "pnp_paper_example1"},
    }


class TestParse:
    def test_minimal_defaults(self):
        cfg = parse_config(json.dumps(minimal_fp()))
        assert cfg.model == {"type": "fokker_planck", "beta": 1, "potential": 0.0, "dissipation_mode": "frozen"}
        assert cfg.grid["side_length"] == 1.0
        assert cfg.time["snapshot_every"] == 0
        assert cfg.solver["kkt_tolerance"] == 1e-9
        assert cfg.solver["damping"] == 0.95
        assert cfg.initial_condition == {"profile": "uniform", "params": {}}
        assert cfg.output == {"directory": "runs", "label": "run"}

    def test_negative_tau(self):
        with pytest.raises(ValidationError) as info:
            parse_config(json.dumps(minimal_fp(time={"tau": -1})))
        assert any("time.tau" in p for p in info.value.problems)

    def test_all_problems_listed(self):
        with pytest.raises(ValidationError) as info:
            parse_config(json.dumps(minimal_fp(time={"tau": -1, "steps": 0}, grid={"dim": 3})))
        text = " ".join(info.value.problems)
        for key in ("time.tau", "time.steps", "grid.dim"):
            assert key in text

    def test_unknown_key_path(self):
        with pytest.raises(ParseError) as info:
            parse_config(json.dumps(minimal_fp(time={"taus": 0.1})))
        assert info.value.path == "time.taus"
        with pytest.raises(ParseError) as info:
            parse_config(json.dumps(minimal_fp(model={"betta": 1})))
        assert info.value.path == "model.betta"

    @pytest.mark.parametrize("text", ["{", "[]", '{"grid": {}}'])
    def test_malformed(self, text):
        with pytest.raises(ParseError):
            parse_config(text)

    def test_type_errors(self):
        with pytest.raises(ParseError) as info:
            parse_config(json.dumps(minimal_fp(model={"beta": "one"})))
        assert info.value.path == "model.beta"
        with pytest.raises(ParseError):
            parse_config(json.dumps(minimal_fp(model={"potential": {"profile": "zigzag"}})))

    def test_model_invariants(self):
        bad = minimal_fp()
        bad["model"] = {"type": "maxwell_stefan", "friction": [[0, 1], [2, 0]]}
        with pytest.raises(ValidationError):
            parse_config(json.dumps(bad))
        bad["model"] = {"type": "fokker_planck", "dissipation_mode": "joint"}
        bad["grid"] = {"dim": 2, "n": 4}
        with pytest.raises(ValidationError):
            parse_config(json.dumps(bad))

    def test_missing_snapshot_file(self, tmp_path):
        cfg = minimal_fp()
        cfg["initial_condition"] = {"snapshot": str(tmp_path / "nope.csv")}
        with pytest.raises(ValidationError):
            parse_config(json.dumps(cfg))

    def test_round_trip(self):
        cfg = parse_config(json.dumps(pnp_config()))
        again = parse_config(cfg.to_json())
        assert again == cfg
        assert isinstance(again, RunConfig)

    def test_builds_model(self):
        cfg = parse_config(json.dumps(minimal_fp(model={"potential": {"profile": "cosine", "amplitude": 2.0}})))
        g = cfg.build_grid()
        model = cfg.build_model(g)
        assert isinstance(model, FokkerPlanck)
        np.testing.assert_allclose(model.potential, 2 * np.cos(2 * np.pi * g.cell_centers()[0]))


class TestInitialConditions:
    def test_pnp_example(self):
        g = PeriodicGrid(2, 20)
        s = builtin_initial_condition("pnp_paper_example1", {}, g, PNP())
        # sin(t) cos(t) = sin(2t)/2 >= -1/2, so 0.52 bounds the sampled minimum
        assert s.components[0].min() > 0
        assert s.components[0].min() >= 1.02 - 0.5
        x = g.cell_centers()[0]
        np.testing.assert_allclose(s.components[0], 1.02 + np.sin(2 * np.pi * x) * np.cos(2 * np.pi * x))

    def test_uniform(self):
        g = PeriodicGrid(1, 6)
        s = builtin_initial_condition("uniform", {"value": 1}, g, FokkerPlanck(1.0, np.zeros(6)))
        np.testing.assert_array_equal(s.components, 1.0)
        ms = builtin_initial_condition("uniform", {}, g, MaxwellStefan(1 - np.eye(3)))
        np.testing.assert_allclose(ms.components.sum(axis=0), 1.0, atol=1e-15)

    def test_gaussian_bump_normalized(self):
        g = PeriodicGrid(2, 16)
        s = builtin_initial_condition("gaussian_bump", {"width": 0.05}, g, FokkerPlanck(1.0, np.zeros(256)))
        assert g.integrate(s.components[0]) == pytest.approx(1.0, abs=1e-10)

    def test_two_region_requires_values(self):
        model, _ = smoke_case("porous_media")
        g = PeriodicGrid(2, 8)
        with pytest.raises(ValidationError):
            builtin_initial_condition("two_region_saturation", {"inside": 0.8}, g, model)
        s = builtin_initial_condition("two_region_saturation",
                                      {"inside": 0.8, "outside": 0.3, "box": [[0, 0.5], [0, 1]]}, g, model)
        assert set(np.unique(s.components[0])) == {0.3, 0.8}
        np.testing.assert_allclose(s.components.sum(axis=0), 1.0)

    def test_errors(self):
        g = PeriodicGrid(1, 4)
        fp = FokkerPlanck(1.0, np.zeros(4))
        with pytest.raises(UnknownProfile):
            builtin_initial_condition("checkerboard", {}, g, fp)
        with pytest.raises(DomainViolation):
            builtin_initial_condition("uniform", {"value": -1}, g, fp)
        with pytest.raises(ValidationError):
            builtin_initial_condition("uniform", {"value": 1, "colour": 2}, g, fp)

    def test_ms_smoke_profile(self):
        g = PeriodicGrid(2, 6)
        s = builtin_initial_condition("ms_three_species_smoke", {}, g, MaxwellStefan(1 - np.eye(3)))
        assert s.components.min() > 0
        assert np.max(np.abs(s.components.sum(axis=0) - 1)) <= 1e-15


class TestFiles:
    def test_snapshot_round_trip(self, tmp_path):
        g = PeriodicGrid(2, (3, 5), side_length=2.0)
        rng = np.random.default_rng(0)
        s = SystemState(g, rng.random((2, 15)) * 10 ** rng.uniform(-8, 8, (2, 15)))
        path = tmp_path / "snap.csv"
        write_snapshot(s, path)
        back = read_snapshot(path)
        np.testing.assert_array_equal(back.components, s.components)
        assert back.grid.n == g.n

    def test_snapshot_row_count(self, tmp_path):
        g = PeriodicGrid(2, 2)
        write_snapshot(SystemState(g, np.arange(4.0)), tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert [l.split()[1] for l in lines[:4]] == ["dim", "n_per_axis", "h", "components"]
        assert len([l for l in lines if not l.startswith("#")]) == 4

    def test_empty_series(self, tmp_path):
        write_series([], tmp_path / "series.csv")
        lines = [l for l in (tmp_path / "series.csv").read_text().splitlines() if not l.startswith("#")]
        assert lines == ["step,time,energy,dissipation_over_tau,kkt_residual,constraint_residual,"
                         "inner_iterations,mass_1,min_1,max_1"]


class TestRun:
    def test_uniform_fp_stationary(self, tmp_path):
        cfg = parse_config(json.dumps(minimal_fp(initial_condition={"profile": "uniform", "params": {"value": 1.0}})))
        bundle = run_simulation(cfg, output_dir=tmp_path)
        assert bundle.ok
        assert len(bundle.rows) == 10
        assert len({r.energy for r in bundle.rows}) == 1
        assert all(r.dissipation_over_tau == 0 for r in bundle.rows)
        times = [r.time for r in bundle.rows]
        assert all(b > a for a, b in zip(times, times[1:]))

    def test_outputs_and_determinism(self, tmp_path):
        cfg = parse_config(json.dumps(pnp_config(steps=5)))
        a = run_simulation(cfg, output_dir=tmp_path, label="a")
        b = run_simulation(cfg, output_dir=tmp_path, label="b")
        assert a.series_path.read_bytes() == b.series_path.read_bytes()
        assert [p.name for p in a.snapshot_paths] == [
            "snapshot_000000.csv", "snapshot_000002.csv", "snapshot_000004.csv", "snapshot_000005.csv"]
        manifest = json.loads(a.manifest_path.read_text())
        assert manifest["status"] == "completed"
        assert manifest["code_version"]
        assert manifest["tolerances"]["energy_inequality_rel"] == 1e-9
        assert parse_config(json.dumps(manifest["config"])) == cfg
        series = a.series_path.read_text().splitlines()
        assert series[0].startswith("# tolerance")
        assert len([l for l in series if not l.startswith("#")]) == 1 + 5
        energies = [r.energy for r in a.rows]
        assert all(e1 < e0 for e0, e1 in zip(energies, energies[1:]))

    def test_forced_failure(self, tmp_path):
        cfg = parse_config(json.dumps(pnp_config(max_iterations=1)))
        with pytest.raises(NoConvergence):
            run_simulation(cfg, output_dir=tmp_path, label="fail")
        manifest = json.loads((tmp_path / "fail" / "manifest.json").read_text())
        assert manifest["status"] == "failed"
        assert manifest["failure"]["error"] == "NoConvergence"
        assert manifest["failure"]["step"] == 1
        assert (tmp_path / "fail" / "series.csv").exists()

    def test_restart_from_snapshot(self, tmp_path):
        cfg = parse_config(json.dumps(pnp_config(steps=2)))
        first = run_simulation(cfg, output_dir=tmp_path, label="first")
        raw = pnp_config(steps=1)
        raw["initial_condition"] = {"snapshot": str(first.snapshot_paths[-1])}
        second = run_simulation(parse_config(json.dumps(raw)), output_dir=tmp_path, label="second")
        assert second.rows[0].mass == pytest.approx(first.rows[-1].mass, rel=1e-14)


class TestCLI:
    def write(self, tmp_path, cfg, name="cfg.json"):
        path = tmp_path / name
        path.write_text(json.dumps(cfg))
        return str(path)

    def test_run_and_check(self, tmp_path, capsys):
        path = self.write(tmp_path, pnp_config(steps=2))
        assert main(["check", path]) == 0
        assert json.loads(capsys.readouterr().out)["model"]["type"] == "pnp"
        assert main(["run", path, "--output", str(tmp_path / "out"), "--seed-label", "demo"]) == 0
        assert (tmp_path / "out" / "demo" / "series.csv").exists()

    def test_exit_codes(self, tmp_path):
        assert main(["check", self.write(tmp_path, minimal_fp(time={"tau": -1}))]) == 2
        assert main(["check", self.write(tmp_path, minimal_fp(time={"taus": 1}))]) == 2
        assert main(["check", str(tmp_path / "missing.json")]) == 4
        failing = self.write(tmp_path, pnp_config(max_iterations=1))
        assert main(["run", failing, "--output", str(tmp_path / "out")]) == 3
        blocker = tmp_path / "file"
        blocker.write_text("")
        ok = self.write(tmp_path, pnp_config(steps=1))
        assert main(["run", ok, "--output", str(blocker)]) == 4

    def test_describe_models(self, capsys):
        assert main(["describe-models"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert set(out["models"]) == {"allen_cahn", "cahn_hilliard", "fokker_planck", "pnp",
                                      "maxwell_stefan", "porous_media"}
        assert out["models"]["maxwell_stefan"]["friction"] == "<required>"
        assert describe_models() == out

    def test_shipped_configs_validate(self):
        from pathlib import Path

        configs = sorted((Path(__file__).parents[1] / "configs").glob("*.json"))
        assert configs
        for path in configs:
            assert main(["check", str(path)]) == 0
