"""Experiment harness: configs, data generation, pipelines, studies.

Everything here is deterministic given the config seed.  Random draws
use seed sequences spawned from that seed, disturbance realizations are
produced as unit draws scaled by the disturbance bound (so studies that
sweep the bound share the same underlying noise), and artifact writers
format floats with repr so files round-trip bit-identically.  Wall-clock
timings are kept out of the reproducible files and land in a separate
timing artifact.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (AllInfeasible, ConfigError, ImpcError, InfeasibleStart,
                     ShapeError)
from .ident import (Dataset, build_data_matrices, dd_interval_bounds,
                    sm_interval_bounds, UncertainModel)
from .polytope import Polytope
from .rmpc import ControllerConfig, VariableHorizonController
from .setalg import Box
from .synth import SynthesisReport, synthesize
from .tube import TubeTables, load_or_compute, precompute_tube

__all__ = ["ExperimentConfig", "Pipeline", "RunRecord", "FdResult", "FdStudy",
           "generate_dataset", "build_pipeline", "simulate_run",
           "run_monte_carlo", "fd_grid_points", "estimate_feasible_domain",
           "run_config"]


def _want(raw: dict, key: str, path: str):
    if key not in raw:
        raise ConfigError(f"{path}{key}", "missing")
    return raw[key]


def _number(raw, key, path, positive=False, nonneg=False) -> float:
    v = _want(raw, key, path)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}{key}", "must be a number")
    v = float(v)
    if positive and v <= 0:
        raise ConfigError(f"{path}{key}", "must be positive")
    if nonneg and v < 0:
        raise ConfigError(f"{path}{key}", "must be nonnegative")
    return v


def _integer(raw, key, path, minimum=None) -> int:
    v = _want(raw, key, path)
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}{key}", "must be an integer")
    if minimum is not None and v < minimum:
        raise ConfigError(f"{path}{key}", f"must be at least {minimum}")
    return v


def _vector(raw, key, path, length=None) -> np.ndarray:
    v = _want(raw, key, path)
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}{key}", "must be a numeric vector") from None
    if arr.ndim != 1 or (length is not None and arr.shape[0] != length):
        want = f" of length {length}" if length is not None else ""
        raise ConfigError(f"{path}{key}", f"must be a vector{want}")
    return arr


def _matrix(raw, key, path, shape=None) -> np.ndarray:
    v = _want(raw, key, path)
    try:
        arr = np.asarray(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}{key}", "must be a numeric matrix") from None
    if arr.ndim != 2 or (shape is not None and arr.shape != shape):
        want = f" of shape {shape}" if shape is not None else ""
        raise ConfigError(f"{path}{key}", f"must be a matrix{want}")
    return arr


def _box(lower: np.ndarray, upper: np.ndarray, path: str) -> Box:
    if np.any(upper <= lower):
        raise ConfigError(path, "upper bounds must exceed lower bounds")
    return Box.from_bounds(lower, upper)


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment description, parsed from JSON."""

    seed: int
    scheme: str
    a_true: np.ndarray
    b_true: np.ndarray
    t: int
    input_scale: float
    dataset_path: Optional[str]
    w_bar: np.ndarray
    epsilon_w: float
    law: str
    gamma: float
    n_max: int
    k_gain: np.ndarray
    cost_weight: np.ndarray
    state_box: Box
    input_box: Box
    eps: float
    x0: Optional[np.ndarray]
    runs: int
    steps: int
    fd_grid: Optional[tuple]
    fd_datasets: int

    @property
    def n(self) -> int:
        return self.a_true.shape[0]

    @property
    def m(self) -> int:
        return self.b_true.shape[1]

    @property
    def w_bar_eff(self) -> np.ndarray:
        return self.epsilon_w * self.w_bar

    @property
    def state_set(self) -> Polytope:
        return Polytope.from_box(self.state_box)

    @property
    def input_set(self) -> Polytope:
        return Polytope.from_box(self.input_box)

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("<root>", "must be a JSON object")
        seed = _integer(raw, "seed", "", minimum=0)
        scheme = _want(raw, "scheme", "")
        if scheme not in ("dd", "sm"):
            raise ConfigError("scheme", "must be 'dd' or 'sm'")

        system = _want(raw, "system", "")
        a = _matrix(system, "a", "system.")
        if a.shape[0] != a.shape[1]:
            raise ConfigError("system.a", "must be square")
        n = a.shape[0]
        b = _matrix(system, "b", "system.")
        if b.shape[0] != n:
            raise ConfigError("system.b", f"must have {n} rows")
        m = b.shape[1]

        ds = _want(raw, "dataset", "")
        dataset_path = ds.get("path")
        if dataset_path is not None and not isinstance(dataset_path, str):
            raise ConfigError("dataset.path", "must be a string")
        t = _integer(ds, "t", "dataset.", minimum=1)
        input_scale = _number(ds, "input_scale", "dataset.", positive=True)
        if input_scale > 1:
            raise ConfigError("dataset.input_scale", "must not exceed 1")

        dist = _want(raw, "disturbance", "")
        w_bar = _vector(dist, "w_bar", "disturbance.", length=n)
        if np.any(w_bar < 0):
            raise ConfigError("disturbance.w_bar", "must be nonnegative")
        epsilon_w = _number(dist, "epsilon_w", "disturbance.", positive=True) \
            if "epsilon_w" in dist else 1.0
        law = dist.get("law", "uniform")
        if law not in ("uniform", "vertex"):
            raise ConfigError("disturbance.law", "must be 'uniform' or 'vertex'")

        ctl = _want(raw, "controller", "")
        gamma = _number(ctl, "gamma", "controller.", positive=True)
        n_max = _integer(ctl, "n_max", "controller.", minimum=1)
        k_gain = _matrix(ctl, "k_gain", "controller.", shape=(m, n))
        if "cost_weight" in ctl:
            cost_weight = _matrix(ctl, "cost_weight", "controller.",
                                  shape=(m, m))
        else:
            cost_weight = np.eye(m)
        state_box = _box(_vector(ctl, "state_lower", "controller.", length=n),
                         _vector(ctl, "state_upper", "controller.", length=n),
                         "controller.state_lower")
        input_box = _box(_vector(ctl, "input_lower", "controller.", length=m),
                         _vector(ctl, "input_upper", "controller.", length=m),
                         "controller.input_lower")

        eps = 1e-3
        if "synthesis" in raw:
            eps = _number(raw["synthesis"], "eps", "synthesis.", positive=True)

        x0, runs, steps = None, 1, 1
        if "simulate" in raw:
            sim = raw["simulate"]
            x0 = _vector(sim, "x0", "simulate.", length=n)
            runs = _integer(sim, "runs", "simulate.", minimum=1)
            steps = _integer(sim, "steps", "simulate.", minimum=1)

        fd_grid, fd_datasets = None, 1
        if "fd" in raw:
            fd = raw["fd"]
            grid = _want(fd, "grid", "fd.")
            if (not isinstance(grid, list) or len(grid) != n
                    or not all(isinstance(g, int) and g >= 2 for g in grid)):
                raise ConfigError(
                    "fd.grid", f"must be a list of {n} integers, each >= 2")
            fd_grid = tuple(grid)
            fd_datasets = _integer(fd, "datasets", "fd.", minimum=1)

        return cls(seed=seed, scheme=scheme, a_true=a, b_true=b, t=t,
                   input_scale=input_scale, dataset_path=dataset_path,
                   w_bar=w_bar, epsilon_w=epsilon_w, law=law, gamma=gamma,
                   n_max=n_max, k_gain=k_gain, cost_weight=cost_weight,
                   state_box=state_box, input_box=input_box, eps=eps,
                   x0=x0, runs=runs, steps=steps, fd_grid=fd_grid,
                   fd_datasets=fd_datasets)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        try:
            raw = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise ConfigError("<file>", f"cannot read {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError("<file>", f"invalid JSON: {exc}") from None
        return cls.from_dict(raw)


def _unit_draws(rng, count: int, dim: int, law: str) -> np.ndarray:
    if law == "vertex":
        return rng.integers(0, 2, size=(count, dim)) * 2.0 - 1.0
    return rng.uniform(-1.0, 1.0, size=(count, dim))


def generate_dataset(cfg: ExperimentConfig, rng) -> Dataset:
    """Simulate the true plant under exciting inputs to collect data.

    Disturbances are unit draws scaled by the effective bound, so two
    configs differing only in epsilon_w see proportional noise.
    """
    n, m, t = cfg.n, cfg.m, cfg.t
    u = cfg.input_box.center + \
        cfg.input_scale * cfg.input_box.radius * rng.uniform(-1, 1, (t, m))
    w = _unit_draws(rng, t, n, cfg.law) * cfg.w_bar_eff
    states = np.zeros((t + 1, n))
    for k in range(t):
        states[k + 1] = cfg.a_true @ states[k] + cfg.b_true @ u[k] + w[k]
    dataset = Dataset(states, u, cfg.w_bar_eff.copy())
    build_data_matrices(dataset)  # rank check; raises when not exciting
    return dataset


def _load_dataset(cfg: ExperimentConfig) -> Dataset:
    if cfg.dataset_path is not None:
        return Dataset.from_csv(cfg.dataset_path, cfg.w_bar_eff)
    return generate_dataset(cfg, np.random.default_rng(cfg.seed))


def identify(cfg: ExperimentConfig, dataset: Dataset) -> UncertainModel:
    if cfg.scheme == "sm":
        return sm_interval_bounds(dataset)
    return dd_interval_bounds(dataset)


@dataclass(frozen=True)
class Pipeline:
    """Everything needed to run the controller for one dataset."""

    cfg: ExperimentConfig
    dataset: Dataset
    model: UncertainModel
    report: SynthesisReport
    tables: TubeTables
    controller: VariableHorizonController


def build_pipeline(cfg: ExperimentConfig, dataset: Optional[Dataset] = None,
                   cache_dir=None) -> Pipeline:
    """Identification, synthesis, tube tables, controller, in order."""
    if dataset is None:
        dataset = _load_dataset(cfg)
    model = identify(cfg, dataset)
    report = synthesize(model, cfg.k_gain, cfg.state_set, cfg.input_set,
                        eps=cfg.eps, seed=cfg.seed)
    if cache_dir is not None:
        tables = load_or_compute(model, cfg.k_gain, cfg.n_max, cache_dir)
    else:
        tables = precompute_tube(model, cfg.k_gain, cfg.n_max)
    ctrl_cfg = ControllerConfig(
        model=model, k_gain=cfg.k_gain, gamma=cfg.gamma, n_max=cfg.n_max,
        state_set=cfg.state_set, input_set=cfg.input_set,
        terminal_set=report.terminal_set, cost_weight=cfg.cost_weight)
    controller = VariableHorizonController(tables, ctrl_cfg)
    return Pipeline(cfg=cfg, dataset=dataset, model=model, report=report,
                    tables=tables, controller=controller)


@dataclass
class RunRecord:
    """One closed-loop run: trajectory, horizons, costs, diagnostics."""

    run_id: int
    states: np.ndarray
    inputs: np.ndarray
    horizons: np.ndarray
    costs: np.ndarray
    solve_times: np.ndarray
    violations: list = field(default_factory=list)
    infeasible_at: Optional[int] = None
    terminal_entry: Optional[int] = None

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]

    def violation_text(self) -> str:
        return ";".join(f"{kind}@{k}" for k, kind in self.violations)


def simulate_run(pipeline: Pipeline, x0, steps: int, rng,
                 run_id: int = 0) -> RunRecord:
    """Close the loop on the true plant for a fixed number of steps.

    The controller may declare every horizon infeasible mid-run; the run
    is then truncated and flagged.  An infeasible initial state raises.
    """
    cfg = pipeline.cfg
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (cfg.n,):
        raise ShapeError("x0 has the wrong dimension")
    w_seq = _unit_draws(rng, steps, cfg.n, cfg.law) * cfg.w_bar_eff
    states = [x0]
    inputs, horizons, costs, times = [], [], [], []
    violations = []
    infeasible_at = None
    for k in range(steps):
        x = states[-1]
        if not cfg.state_set.contains(x, tol=1e-9):
            violations.append((k, "state"))
        try:
            u, sol = pipeline.controller.step(x)
        except AllInfeasible as exc:
            if k == 0:
                raise InfeasibleStart(
                    f"initial state is infeasible for every horizon: {exc}"
                ) from exc
            infeasible_at = k
            break
        if not cfg.input_set.contains(u, tol=1e-9):
            violations.append((k, "input"))
        inputs.append(u)
        horizons.append(sol.n_star)
        costs.append(sol.j_star)
        times.append(sol.solve_time)
        states.append(cfg.a_true @ x + cfg.b_true @ u + w_seq[k])
    if infeasible_at is None and not cfg.state_set.contains(states[-1], 1e-9):
        violations.append((len(states) - 1, "state"))
    terminal_entry = None
    terminal = pipeline.report.terminal_set
    for k, x in enumerate(states):
        if terminal.contains(x, tol=1e-9):
            terminal_entry = k
            break
    return RunRecord(
        run_id=run_id,
        states=np.array(states),
        inputs=np.array(inputs).reshape(len(inputs), cfg.m),
        horizons=np.array(horizons, dtype=int),
        costs=np.array(costs, dtype=float),
        solve_times=np.array(times, dtype=float),
        violations=violations,
        infeasible_at=infeasible_at,
        terminal_entry=terminal_entry,
    )


def run_monte_carlo(pipeline: Pipeline, x0, runs: int, steps: int,
                    seed: int) -> list:
    """Independent disturbance realizations from spawned seed streams."""
    streams = np.random.SeedSequence(seed).spawn(runs)
    return [simulate_run(pipeline, x0, steps, np.random.default_rng(s), i)
            for i, s in enumerate(streams)]


def fd_grid_points(box: Box, counts) -> np.ndarray:
    """Inclusive uniform grid over a box, first axis slowest."""
    axes = [np.linspace(lo, hi, c) for lo, hi, c
            in zip(box.lower, box.upper, counts)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


@dataclass(frozen=True)
class FdResult:
    dataset_index: int
    n_feasible: int
    area: float
    empty: bool
    mask: Optional[np.ndarray]
    error: str = ""


@dataclass(frozen=True)
class FdStudy:
    points: np.ndarray
    results: tuple

    @property
    def areas(self) -> np.ndarray:
        return np.array([r.area for r in self.results])

    @property
    def mean_area(self) -> float:
        return float(np.mean(self.areas))

    @property
    def std_area(self) -> float:
        return float(np.std(self.areas))

    @property
    def n_empty(self) -> int:
        return sum(1 for r in self.results if r.empty)


def _hull_area(points: np.ndarray) -> float:
    if points.shape[0] < points.shape[1] + 1:
        return 0.0
    from scipy.spatial import ConvexHull, QhullError
    try:
        return float(ConvexHull(points).volume)
    except QhullError:
        return 0.0


def feasibility_mask(controller: VariableHorizonController,
                     points: np.ndarray) -> np.ndarray:
    return np.array([controller.feasible(x) for x in points])


def estimate_feasible_domain(cfg: ExperimentConfig,
                             n_datasets: Optional[int] = None,
                             counts=None) -> FdStudy:
    """Feasible-domain statistics across freshly drawn datasets.

    Each dataset gets its own identification, synthesis and controller;
    the same state grid is probed for every one.  Pipelines that fail to
    synthesize are recorded as empty with the error message kept.
    """
    if counts is None:
        counts = cfg.fd_grid
    if counts is None:
        raise ConfigError("fd.grid", "missing")
    if n_datasets is None:
        n_datasets = cfg.fd_datasets
    points = fd_grid_points(cfg.state_box, counts)
    streams = np.random.SeedSequence(cfg.seed).spawn(n_datasets)
    results = []
    for i, stream in enumerate(streams):
        try:
            dataset = generate_dataset(cfg, np.random.default_rng(stream))
            pipeline = build_pipeline(cfg, dataset=dataset)
            mask = feasibility_mask(pipeline.controller, points)
            area = _hull_area(points[mask]) if cfg.n == 2 else float("nan")
            results.append(FdResult(i, int(mask.sum()), area,
                                    empty=not mask.any(), mask=mask))
        except ImpcError as exc:
            results.append(FdResult(i, 0, 0.0, empty=True, mask=None,
                                    error=f"{type(exc).__name__}: {exc}"))
    return FdStudy(points=points, results=tuple(results))


def _float_cell(v) -> str:
    return repr(float(v))


def write_run_csv(record: RunRecord, cfg: ExperimentConfig, path) -> None:
    n, m = cfg.n, cfg.m
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["k"] + [f"x_{i+1}" for i in range(n)]
                        + [f"u_{i+1}" for i in range(m)]
                        + ["n_star", "j_star"])
        for k in range(record.states.shape[0]):
            row = [str(k)] + [_float_cell(v) for v in record.states[k]]
            if k < record.steps:
                row += [_float_cell(v) for v in record.inputs[k]]
                row += [str(int(record.horizons[k])),
                        _float_cell(record.costs[k])]
            else:
                row += [""] * (m + 2)
            writer.writerow(row)


def write_summary_csv(records: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "steps", "infeasible_at", "terminal_entry",
                         "violations", "mean_horizon", "total_cost"])
        for r in records:
            writer.writerow([
                str(r.run_id), str(r.steps),
                "" if r.infeasible_at is None else str(r.infeasible_at),
                "" if r.terminal_entry is None else str(r.terminal_entry),
                r.violation_text(),
                _float_cell(r.horizons.mean()) if r.steps else "",
                _float_cell(r.costs.sum()) if r.steps else "",
            ])


def write_timing_csv(records: list, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["run", "k", "solve_time_s"])
        for r in records:
            for k, t in enumerate(r.solve_times):
                writer.writerow([str(r.run_id), str(k), _float_cell(t)])


def write_fd_csv(study: FdStudy, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["dataset", "n_feasible", "area", "empty", "error"])
        for r in study.results:
            writer.writerow([str(r.dataset_index), str(r.n_feasible),
                             _float_cell(r.area), str(int(r.empty)), r.error])


def write_fd_points_csv(study: FdStudy, path) -> None:
    """Grid points with the feasibility mask of the first usable dataset."""
    mask = next((r.mask for r in study.results if r.mask is not None), None)
    dim = study.points.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x_{i+1}" for i in range(dim)] + ["feasible"])
        for i, p in enumerate(study.points):
            flag = "" if mask is None else str(int(mask[i]))
            writer.writerow([_float_cell(v) for v in p] + [flag])


def run_config(cfg: ExperimentConfig, command: str, out_dir) -> int:
    """Execute one harness command, writing artifacts into out_dir.

    Returns the process exit code: 0 on success, 2 when a closed-loop
    invariant (constraint satisfaction, recursive feasibility) fails.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    dataset = _load_dataset(cfg)
    dataset.to_csv(out / "dataset.csv")
    model = identify(cfg, dataset)
    payload = model.to_dict()
    payload["scheme"] = cfg.scheme
    (out / "model.json").write_text(json.dumps(payload, indent=2))
    if command == "identify":
        print(f"identified model from {dataset.inputs.shape[0]} samples; "
              f"max radius {max(model.delta_a.max(), model.delta_b.max()):.6g}")
        return 0

    pipeline = build_pipeline(cfg, dataset=dataset, cache_dir=out / "cache")
    pipeline.report.save(out / "synthesis.json")
    pipeline.tables.save(out / "tube.json")
    if command == "synthesize":
        ev = pipeline.report.gain
        print(f"gain evidence: vertex rho {ev.vertex_rho:.4f}, "
              f"series rho {ev.series_rho:.4f}; terminal route "
              f"{pipeline.report.terminal_route}")
        return 0

    if command == "simulate":
        if cfg.x0 is None:
            raise ConfigError("simulate", "section required for this command")
        t0 = time.perf_counter()
        records = run_monte_carlo(pipeline, cfg.x0, cfg.runs, cfg.steps,
                                  cfg.seed)
        elapsed = time.perf_counter() - t0
        bad = False
        for r in records:
            write_run_csv(r, cfg, out / f"run_{r.run_id:03d}.csv")
            status = []
            if r.violations:
                status.append(f"violations={r.violation_text()}")
                bad = True
            if r.infeasible_at is not None:
                status.append(f"infeasible_at={r.infeasible_at}")
                bad = True
            entry = "-" if r.terminal_entry is None else str(r.terminal_entry)
            print(f"run {r.run_id}: steps={r.steps} terminal_entry={entry} "
                  + (" ".join(status) if status else "ok"))
        write_summary_csv(records, out / "runs_summary.csv")
        write_timing_csv(records, out / "timing.csv")
        from .plotting import plot_trajectories
        plot_trajectories(records, cfg, pipeline.report, out / "traj.svg")
        print(f"{len(records)} runs in {elapsed:.2f}s")
        return 2 if bad else 0

    if command == "fd":
        study = estimate_feasible_domain(cfg)
        write_fd_csv(study, out / "fd.csv")
        write_fd_points_csv(study, out / "fd_points.csv")
        (out / "fd_summary.json").write_text(json.dumps({
            "datasets": len(study.results),
            "mean_area": study.mean_area,
            "std_area": study.std_area,
            "n_empty": study.n_empty,
        }, indent=2))
        from .plotting import plot_feasible_domain
        plot_feasible_domain(study, cfg, out / "fd.svg")
        print(f"feasible domain over {len(study.results)} datasets: "
              f"mean area {study.mean_area:.3f} (std {study.std_area:.3f}), "
              f"{study.n_empty} empty")
        return 0

    raise ConfigError("<command>", f"unknown command '{command}'")
