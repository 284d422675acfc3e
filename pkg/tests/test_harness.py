"""Experiment harness tests: config validation, data generation,
closed-loop simulation, feasible-domain studies, artifacts, CLI."""

import copy
import json

import numpy as np
import pytest

import impc
import impc.cli
from impc import (Box, ConfigError, Dataset, ExperimentConfig, InfeasibleStart,
                  build_pipeline, estimate_feasible_domain, fd_grid_points,
                  generate_dataset, run_monte_carlo, simulate_run)
from helpers import NominalVariableHorizonMpc


def base_config():
    return {
        "seed": 7,
        "scheme": "dd",
        "system": {"a": [[1.0, 1.0], [0.0, 1.0]], "b": [[0.0], [1.0]]},
        "dataset": {"t": 40, "input_scale": 0.8},
        "disturbance": {"w_bar": [0.1, 0.05], "epsilon_w": 1.0,
                        "law": "uniform"},
        "controller": {"gamma": 1.0, "n_max": 6, "k_gain": [[-0.42, -1.3]],
                       "state_lower": [-12.0, -4.0],
                       "state_upper": [12.0, 4.0],
                       "input_lower": [-2.0], "input_upper": [2.0]},
        "simulate": {"x0": [-6.0, 0.0], "runs": 2, "steps": 10},
        "fd": {"grid": [9, 5], "datasets": 2},
    }


def cfg_from(over=None, drop=None):
    raw = copy.deepcopy(base_config())
    if over:
        for dotted, value in over.items():
            parts = dotted.split(".")
            node = raw
            for p in parts[:-1]:
                node = node[p]
            node[parts[-1]] = value
    if drop:
        parts = drop.split(".")
        node = raw
        for p in parts[:-1]:
            node = node[p]
        del node[parts[-1]]
    return raw


class TestConfigValidation:
    def test_benchmark_exemplar_parses(self, benchmark_cfg):
        assert benchmark_cfg.seed == 2024
        assert benchmark_cfg.scheme == "dd"
        assert (benchmark_cfg.n, benchmark_cfg.m) == (2, 1)
        assert benchmark_cfg.t == 50
        assert benchmark_cfg.n_max == 10
        assert benchmark_cfg.fd_grid == (25, 12)
        assert np.allclose(benchmark_cfg.w_bar, [0.1, 0.05])
        assert np.allclose(benchmark_cfg.x0, [-6.0, 0.0])

    @pytest.mark.parametrize("drop,field", [
        ("controller.gamma", "controller.gamma"),
        ("disturbance.w_bar", "disturbance.w_bar"),
        ("system.a", "system.a"),
        ("dataset.t", "dataset.t"),
        ("controller.state_lower", "controller.state_lower"),
    ])
    def test_missing_fields_name_their_path(self, drop, field):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict(cfg_from(drop=drop))
        assert exc.value.field == field

    @pytest.mark.parametrize("over,field", [
        ({"scheme": "other"}, "scheme"),
        ({"controller.gamma": -1.0}, "controller.gamma"),
        ({"controller.n_max": 0}, "controller.n_max"),
        ({"dataset.input_scale": 1.5}, "dataset.input_scale"),
        ({"disturbance.law": "gauss"}, "disturbance.law"),
        ({"disturbance.w_bar": [0.1]}, "disturbance.w_bar"),
        ({"controller.k_gain": [[1.0]]}, "controller.k_gain"),
        ({"fd.grid": [25]}, "fd.grid"),
        ({"controller.state_upper": [-13.0, 4.0]}, "controller.state_lower"),
    ])
    def test_bad_values_name_their_path(self, over, field):
        with pytest.raises(ConfigError) as exc:
            ExperimentConfig.from_dict(cfg_from(over=over))
        assert exc.value.field == field

    def test_file_errors(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_json(bad)

    def test_defaults(self):
        raw = cfg_from(drop="simulate")
        del raw["fd"]
        del raw["disturbance"]["epsilon_w"]
        del raw["disturbance"]["law"]
        cfg = ExperimentConfig.from_dict(raw)
        assert cfg.epsilon_w == 1.0
        assert cfg.law == "uniform"
        assert cfg.x0 is None
        assert cfg.fd_grid is None
        assert np.array_equal(cfg.cost_weight, np.eye(1))


class TestDataGeneration:
    def test_deterministic(self):
        cfg = ExperimentConfig.from_dict(base_config())
        d1 = generate_dataset(cfg, np.random.default_rng(cfg.seed))
        d2 = generate_dataset(cfg, np.random.default_rng(cfg.seed))
        assert d1.states.tobytes() == d2.states.tobytes()
        assert d1.inputs.tobytes() == d2.inputs.tobytes()

    def test_common_random_numbers_across_epsilon(self):
        # halving epsilon_w keeps inputs identical and scales the
        # realized disturbances exactly by one half
        full = ExperimentConfig.from_dict(base_config())
        half = ExperimentConfig.from_dict(
            cfg_from(over={"disturbance.epsilon_w": 0.5}))
        d_full = generate_dataset(full, np.random.default_rng(full.seed))
        d_half = generate_dataset(half, np.random.default_rng(half.seed))
        assert d_full.inputs.tobytes() == d_half.inputs.tobytes()
        a, b = full.a_true, full.b_true
        w_full = d_full.states[1:] - d_full.states[:-1] @ a.T \
            - d_full.inputs @ b.T
        w_half = d_half.states[1:] - d_half.states[:-1] @ a.T \
            - d_half.inputs @ b.T
        assert np.allclose(w_half, 0.5 * w_full, atol=1e-12)
        assert np.all(np.abs(w_full) <= full.w_bar_eff + 1e-12)

    def test_vertex_law_hits_extremes(self):
        cfg = ExperimentConfig.from_dict(
            cfg_from(over={"disturbance.law": "vertex"}))
        ds = generate_dataset(cfg, np.random.default_rng(cfg.seed))
        w = ds.states[1:] - ds.states[:-1] @ cfg.a_true.T \
            - ds.inputs @ cfg.b_true.T
        assert np.allclose(np.abs(w), np.tile(cfg.w_bar_eff, (cfg.t, 1)),
                           atol=1e-9)

    def test_inputs_respect_scale(self):
        cfg = ExperimentConfig.from_dict(base_config())
        ds = generate_dataset(cfg, np.random.default_rng(0))
        assert np.all(np.abs(ds.inputs) <= 0.8 * 2.0 + 1e-12)

    def test_dataset_path_round_trip(self, tmp_path):
        cfg = ExperimentConfig.from_dict(base_config())
        ds = generate_dataset(cfg, np.random.default_rng(cfg.seed))
        path = tmp_path / "data.csv"
        ds.to_csv(path)
        cfg2 = ExperimentConfig.from_dict(
            cfg_from(over={"dataset.path": str(path)}))
        pipe = build_pipeline(cfg2)
        assert pipe.dataset.states.tobytes() == ds.states.tobytes()


class TestSimulation:
    def test_clean_run(self, benchmark_pipeline):
        rec = simulate_run(benchmark_pipeline, [-6.0, 0.0], 30,
                           np.random.default_rng(1), run_id=5)
        assert rec.run_id == 5
        assert rec.states.shape == (31, 2)
        assert rec.inputs.shape == (30, 1)
        assert rec.steps == 30
        assert rec.violations == []
        assert rec.infeasible_at is None
        assert rec.terminal_entry is not None and rec.terminal_entry <= 10
        assert np.all(rec.horizons >= 1)
        assert np.all(rec.costs > 0)

    def test_infeasible_start_raises(self, benchmark_pipeline):
        with pytest.raises(InfeasibleStart):
            simulate_run(benchmark_pipeline, [11.9, 3.9], 5,
                         np.random.default_rng(0))

    def test_monte_carlo_reproducible(self, benchmark_pipeline):
        a = run_monte_carlo(benchmark_pipeline, [-6.0, 0.0], 3, 8, seed=42)
        b = run_monte_carlo(benchmark_pipeline, [-6.0, 0.0], 3, 8, seed=42)
        assert [r.run_id for r in a] == [0, 1, 2]
        for ra, rb in zip(a, b):
            assert ra.states.tobytes() == rb.states.tobytes()
        # different runs see different disturbances
        assert a[0].states.tobytes() != a[1].states.tobytes()


class TestFeasibleDomain:
    def test_grid_points_order_and_count(self):
        pts = fd_grid_points(Box.from_bounds([0.0, 0.0], [1.0, 10.0]), (3, 2))
        assert pts.shape == (6, 2)
        expect = np.array([[0.0, 0.0], [0.0, 10.0], [0.5, 0.0],
                           [0.5, 10.0], [1.0, 0.0], [1.0, 10.0]])
        assert np.allclose(pts, expect)

    def test_study_shapes_and_determinism(self):
        cfg = ExperimentConfig.from_dict(base_config())
        s1 = estimate_feasible_domain(cfg, n_datasets=2, counts=(7, 4))
        s2 = estimate_feasible_domain(cfg, n_datasets=2, counts=(7, 4))
        assert s1.points.shape == (28, 2)
        assert len(s1.results) == 2
        assert s1.areas.tolist() == s2.areas.tolist()
        for r in s1.results:
            assert not r.empty
            assert r.n_feasible == r.mask.sum()
            assert r.area > 0

    def test_zero_disturbance_matches_nominal_oracle(self):
        # with w_bar = 0 identification is exact and every tube radius is
        # zero, so the robust feasibility mask must coincide with a plain
        # nominal variable-horizon MPC built independently
        raw = cfg_from(over={"disturbance.w_bar": [0.0, 0.0]})
        cfg = ExperimentConfig.from_dict(raw)
        pipe = build_pipeline(cfg)
        pts = fd_grid_points(cfg.state_box, (9, 5))
        robust_mask = impc.feasibility_mask(pipe.controller, pts)
        nominal = NominalVariableHorizonMpc(
            cfg.a_true, cfg.b_true, cfg.k_gain, cfg.gamma, cfg.n_max,
            cfg.state_set, cfg.input_set, pipe.report.terminal_set,
            cfg.cost_weight)
        nominal_mask = np.array([nominal.feasible(x) for x in pts])
        assert np.array_equal(robust_mask, nominal_mask)
        assert robust_mask.sum() > 0


class TestArtifacts:
    def test_simulate_artifacts_reproducible(self, tmp_path):
        cfg = ExperimentConfig.from_dict(base_config())
        rc1 = impc.run_config(cfg, "simulate", tmp_path / "a")
        rc2 = impc.run_config(cfg, "simulate", tmp_path / "b")
        assert rc1 == 0 and rc2 == 0
        for name in ("dataset.csv", "model.json", "synthesis.json",
                     "tube.json", "run_000.csv", "run_001.csv",
                     "runs_summary.csv", "traj.svg"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b, f"{name} differs between identical reruns"
        # timing is intentionally excluded from reproducibility
        assert (tmp_path / "a" / "timing.csv").exists()

    def test_run_csv_layout(self, tmp_path, benchmark_pipeline):
        rec = simulate_run(benchmark_pipeline, [-6.0, 0.0], 5,
                           np.random.default_rng(3))
        path = tmp_path / "run.csv"
        impc.write_run_csv(rec, benchmark_pipeline.cfg, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "k,x_1,x_2,u_1,n_star,j_star"
        assert len(lines) == 7  # header + 6 states
        last = lines[-1].split(",")
        assert last[3] == "" and last[4] == "" and last[5] == ""
        # states round-trip exactly through the text format
        back = Dataset.from_csv(path, np.zeros(2))
        assert back.states.tobytes() == rec.states.tobytes()
        assert back.inputs.tobytes() == rec.inputs.tobytes()

    def test_fd_artifacts(self, tmp_path):
        cfg = ExperimentConfig.from_dict(cfg_from(over={"fd.grid": [7, 4],
                                                        "fd.datasets": 2}))
        rc = impc.run_config(cfg, "fd", tmp_path)
        assert rc == 0
        summary = json.loads((tmp_path / "fd_summary.json").read_text())
        assert summary["datasets"] == 2
        assert summary["n_empty"] == 0
        assert summary["mean_area"] > 0
        lines = (tmp_path / "fd.csv").read_text().splitlines()
        assert lines[0] == "dataset,n_feasible,area,empty,error"
        assert len(lines) == 3
        pts = (tmp_path / "fd_points.csv").read_text().splitlines()
        assert pts[0] == "x_1,x_2,feasible"
        assert len(pts) == 1 + 28
        assert (tmp_path / "fd.svg").exists()

    def test_plot_rejects_non_planar(self, benchmark_cfg):
        study = impc.FdStudy(points=np.zeros((4, 3)), results=())
        from impc.plotting import plot_feasible_domain
        with pytest.raises(ValueError):
            plot_feasible_domain(study, benchmark_cfg, "/dev/null")


class TestCli:
    def write_cfg(self, tmp_path, raw, name="cfg.json"):
        path = tmp_path / name
        path.write_text(json.dumps(raw))
        return path

    def test_identify_success(self, tmp_path):
        path = self.write_cfg(tmp_path, base_config())
        out = tmp_path / "out"
        assert impc.cli.main(["identify", "--config", str(path),
                              "--out", str(out)]) == 0
        assert (out / "dataset.csv").exists()
        model = json.loads((out / "model.json").read_text())
        assert model["scheme"] == "dd"
        assert np.array(model["a_hat"]).shape == (2, 2)

    def test_config_error_exit_code(self, tmp_path, capsys):
        raw = cfg_from(drop="controller.gamma")
        path = self.write_cfg(tmp_path, raw)
        assert impc.cli.main(["identify", "--config", str(path),
                              "--out", str(tmp_path / "o")]) == 1
        assert "controller.gamma" in capsys.readouterr().err

    def test_missing_file_exit_code(self, tmp_path):
        assert impc.cli.main(["identify", "--config",
                              str(tmp_path / "nope.json"),
                              "--out", str(tmp_path / "o")]) == 1

    def test_runtime_error_exit_code(self, tmp_path, capsys):
        # a gain that stabilizes nothing: synthesis must refuse, and the
        # CLI maps that failure to exit code 2
        raw = cfg_from(over={"controller.k_gain": [[0.0, 0.0]]})
        path = self.write_cfg(tmp_path, raw)
        assert impc.cli.main(["synthesize", "--config", str(path),
                              "--out", str(tmp_path / "o")]) == 2
        assert capsys.readouterr().err != ""

    def test_seed_override_changes_data(self, tmp_path):
        path = self.write_cfg(tmp_path, base_config())
        a, b = tmp_path / "a", tmp_path / "b"
        assert impc.cli.main(["identify", "--config", str(path),
                              "--out", str(a)]) == 0
        assert impc.cli.main(["identify", "--config", str(path),
                              "--out", str(b), "--seed", "9"]) == 0
        assert (a / "dataset.csv").read_bytes() != (b / "dataset.csv").read_bytes()
