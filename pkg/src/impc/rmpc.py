"""Variable-horizon robust MPC over a precomputed uncertainty tube.

The online problem predicts a nominal trajectory z, an auxiliary input
sequence v, and epigraph variables s >= |(z, v)| stagewise.  Constraint
sets are tightened by two contributions: the cumulative disturbance tube
(a constant per step index) and the propagated parameter uncertainty,
whose effect scales with the nominal magnitudes through s.  The horizon
itself is a decision variable: one QP per candidate length, keep the
cheapest total cost gamma * n + sum of stage costs, ties to shorter.

The applied input is v(0); the ancillary feedback K acts on the error
between plant and nominal state, which is zero at the first stage.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import AllInfeasible, EmptyTightened, ShapeError
from .ident import UncertainModel
from .polytope import Polytope
from .qpsolve import QpProblem, QpStatus, find_feasible_point, solve_qp
from .tube import TubeTables

__all__ = ["ControllerConfig", "HorizonSolution", "VariableHorizonController",
           "tighten_constraints", "assemble_horizon_qp", "solve_variable_horizon",
           "control_step", "verify_solution_inclusion", "feasible_any_horizon"]

# skipping a candidate horizon is safe once gamma*n alone cannot beat the
# incumbent cost; the slack keeps exact ties resolved toward shorter n
PRUNE_SLACK = 1e-12


@dataclass(frozen=True)
class ControllerConfig:
    """Everything the online controller needs besides the tube tables."""

    model: UncertainModel
    k_gain: np.ndarray
    gamma: float
    n_max: int
    state_set: Polytope
    input_set: Polytope
    terminal_set: Polytope
    cost_weight: np.ndarray | None = None

    def __post_init__(self):
        k = np.array(self.k_gain, dtype=float)
        n, m = self.model.n, self.model.m
        if k.shape != (m, n):
            raise ShapeError(f"k_gain must be ({m}, {n}), got {k.shape}")
        w = self.cost_weight
        w = np.eye(m) if w is None else np.array(w, dtype=float)
        if w.shape != (m, m):
            raise ShapeError(f"cost_weight must be ({m}, {m})")
        if np.max(np.abs(w - w.T), initial=0.0) > 1e-12:
            raise ValueError("cost_weight must be symmetric")
        if np.min(np.linalg.eigvalsh(w)) < -1e-12:
            raise ValueError("cost_weight must be positive semidefinite")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if int(self.n_max) < 1:
            raise ValueError("n_max must be at least 1")
        if self.state_set.dim != n:
            raise ShapeError("state_set dimension mismatch")
        if self.input_set.dim != m:
            raise ShapeError("input_set dimension mismatch")
        if self.terminal_set.dim != n:
            raise ShapeError("terminal_set dimension mismatch")
        k.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "k_gain", k)
        object.__setattr__(self, "cost_weight", w)
        object.__setattr__(self, "n_max", int(self.n_max))
        object.__setattr__(self, "gamma", float(self.gamma))


class TightenedConstraints(NamedTuple):
    lhs: np.ndarray        # rows applied to z(j) (state/terminal) or v(j) (input)
    offsets: np.ndarray    # right-hand sides after the disturbance tightening
    coeff: np.ndarray      # nonnegative matrix multiplying the tube radii
    deltas: tuple          # radius matrix for each earlier stage, oldest first


def tighten_constraints(tables: TubeTables, cfg: ControllerConfig, j: int,
                        kind: str) -> TightenedConstraints:
    """Constraint data at prediction step j after removing the tube.

    deltas[i] is the uncertainty radius that multiplies |xi(i)| at this
    step: stage i has been propagated j-1-i times.  Raises EmptyTightened
    when the disturbance tube alone exceeds some constraint row.
    """
    if j < 0 or j > tables.n_max:
        raise ValueError(f"step index {j} outside precomputed range")
    if kind == "state":
        target = cfg.state_set
        coeff = np.abs(target.h)
    elif kind == "terminal":
        target = cfg.terminal_set
        coeff = np.abs(target.h)
    elif kind == "input":
        target = cfg.input_set
        coeff = np.abs(target.h @ cfg.k_gain)
    else:
        raise ValueError(f"unknown constraint kind {kind!r}")
    offsets = target.b - coeff @ tables.w_cumulative[j].radius
    if np.any(offsets < 0):
        raise EmptyTightened(
            f"{kind} constraints at step {j} cannot hold for any trajectory"
        )
    deltas = tuple(tables.delta_terms[j - 1 - i].radius for i in range(j))
    return TightenedConstraints(target.h, offsets, coeff, deltas)


class _Layout(NamedTuple):
    n: int        # horizon length
    sdim: int     # state dimension
    m: int        # input dimension
    voff: int     # start of the v block
    soff: int     # start of the s block
    dim: int      # total decision dimension

    def z(self, j):
        return slice(j * self.sdim, (j + 1) * self.sdim)

    def v(self, i):
        return slice(self.voff + i * self.m, self.voff + (i + 1) * self.m)

    def s(self, i):
        w = self.sdim + self.m
        return slice(self.soff + i * w, self.soff + (i + 1) * w)


class _Template(NamedTuple):
    layout: _Layout
    hessian: np.ndarray
    eq_lhs: np.ndarray
    eq_rhs_base: np.ndarray
    ineq_lhs: np.ndarray
    ineq_rhs: np.ndarray


def _build_template(n: int, tables: TubeTables, cfg: ControllerConfig) -> _Template:
    sdim, m = cfg.model.n, cfg.model.m
    xi = sdim + m
    lay = _Layout(n, sdim, m,
                  voff=sdim * (n + 1),
                  soff=sdim * (n + 1) + m * n,
                  dim=sdim * (n + 1) + m * n + xi * n)
    a_hat, b_hat, k = cfg.model.a_hat, cfg.model.b_hat, cfg.k_gain

    # nominal dynamics and initial-state pin
    eq = np.zeros((sdim * (n + 1), lay.dim))
    eq[:sdim, lay.z(0)] = np.eye(sdim)
    for j in range(n):
        rows = slice(sdim * (j + 1), sdim * (j + 2))
        eq[rows, lay.z(j + 1)] = np.eye(sdim)
        eq[rows, lay.z(j)] = -a_hat
        eq[rows, lay.v(j)] = -b_hat
    eq_rhs = np.zeros(sdim * (n + 1))

    ineq_rows = []
    ineq_rhs = []

    def stage_tube_columns(block, tight, j):
        for i in range(j):
            block[:, lay.s(i)] = tight.coeff @ tight.deltas[i]

    # epigraph rows: s(i) bounds the magnitude of (z(i), v(i))
    for i in range(n):
        blk = np.zeros((2 * xi, lay.dim))
        blk[:sdim, lay.z(i)] = np.eye(sdim)
        blk[sdim:xi, lay.v(i)] = np.eye(m)
        blk[xi:xi + sdim, lay.z(i)] = -np.eye(sdim)
        blk[xi + sdim:, lay.v(i)] = -np.eye(m)
        blk[:, lay.s(i)] = np.vstack([-np.eye(xi), -np.eye(xi)])
        ineq_rows.append(blk)
        ineq_rhs.append(np.zeros(2 * xi))

    # state rows for every predicted step
    for j in range(n + 1):
        tight = tighten_constraints(tables, cfg, j, "state")
        blk = np.zeros((tight.lhs.shape[0], lay.dim))
        blk[:, lay.z(j)] = tight.lhs
        stage_tube_columns(blk, tight, j)
        ineq_rows.append(blk)
        ineq_rhs.append(tight.offsets)

    # input rows
    for j in range(n):
        tight = tighten_constraints(tables, cfg, j, "input")
        blk = np.zeros((tight.lhs.shape[0], lay.dim))
        blk[:, lay.v(j)] = tight.lhs
        stage_tube_columns(blk, tight, j)
        ineq_rows.append(blk)
        ineq_rhs.append(tight.offsets)

    # terminal rows
    tight = tighten_constraints(tables, cfg, n, "terminal")
    blk = np.zeros((tight.lhs.shape[0], lay.dim))
    blk[:, lay.z(n)] = tight.lhs
    stage_tube_columns(blk, tight, n)
    ineq_rows.append(blk)
    ineq_rhs.append(tight.offsets)

    # stage costs |v - K z|^2 weighted; factor 2 because the solver
    # minimizes 0.5 x'Hx so objectives come out as the plain sum
    hess = np.zeros((lay.dim, lay.dim))
    w = cfg.cost_weight
    kwk = k.T @ w @ k
    kw = k.T @ w
    for j in range(n):
        zi, vi = lay.z(j), lay.v(j)
        hess[zi, zi] += 2.0 * kwk
        hess[vi, vi] += 2.0 * w
        hess[zi, vi] += -2.0 * kw
        hess[vi, zi] += -2.0 * kw.T

    return _Template(lay, hess, eq, eq_rhs,
                     np.vstack(ineq_rows), np.concatenate(ineq_rhs))


def _problem_for(template: _Template, x) -> QpProblem:
    lay = template.layout
    x = np.asarray(x, dtype=float)
    if x.shape != (lay.sdim,):
        raise ShapeError(f"state must have shape ({lay.sdim},)")
    rhs = template.eq_rhs_base.copy()
    rhs[:lay.sdim] = x
    return QpProblem(template.hessian, np.zeros(lay.dim),
                     template.eq_lhs, rhs,
                     template.ineq_lhs, template.ineq_rhs)


def assemble_horizon_qp(x, n: int, tables: TubeTables,
                        cfg: ControllerConfig) -> QpProblem:
    """The fixed-horizon QP for candidate length n at measured state x."""
    if not 1 <= n <= min(cfg.n_max, tables.n_max):
        raise ValueError(f"horizon {n} outside 1..{min(cfg.n_max, tables.n_max)}")
    return _problem_for(_build_template(n, tables, cfg), x)


@dataclass
class HorizonSolution:
    n_star: int
    j_star: float
    z_seq: np.ndarray          # (n_star + 1, n)
    v_seq: np.ndarray          # (n_star, m)
    s_seq: np.ndarray          # (n_star, n + m)
    statuses: dict = field(default_factory=dict)
    qp_objective: float = 0.0
    solve_time: float = 0.0


class VariableHorizonController:
    """Caches per-horizon QP templates so repeated solves stay cheap."""

    def __init__(self, tables: TubeTables, cfg: ControllerConfig):
        if cfg.n_max > tables.n_max:
            raise ValueError("tube tables shorter than the configured horizon")
        self.tables = tables
        self.cfg = cfg
        self._templates: dict[int, _Template] = {}
        self._empty: dict[int, str] = {}

    def _template(self, n: int) -> _Template:
        if n not in self._templates and n not in self._empty:
            try:
                self._templates[n] = _build_template(n, self.tables, self.cfg)
            except EmptyTightened as exc:
                self._empty[n] = str(exc)
        if n in self._empty:
            raise EmptyTightened(self._empty[n])
        return self._templates[n]

    def solve(self, x) -> HorizonSolution:
        """Try every candidate horizon, return the best total cost.

        Horizons whose fixed cost gamma*n already exceeds the incumbent
        are skipped; they provably cannot win because stage costs are
        nonnegative.  Infeasibility at one horizon never stops the scan.
        """
        t0 = time.perf_counter()
        cfg = self.cfg
        statuses: dict[int, str] = {}
        best = None
        best_j = np.inf
        best_n = 0
        for n in range(1, cfg.n_max + 1):
            if best is not None and cfg.gamma * n >= best_j - PRUNE_SLACK:
                statuses[n] = "skipped"
                continue
            try:
                template = self._template(n)
            except EmptyTightened:
                statuses[n] = "empty_tightened"
                continue
            sol = solve_qp(_problem_for(template, x))
            statuses[n] = sol.status.value
            if sol.status is not QpStatus.OPTIMAL:
                continue
            stage_cost = max(sol.objective, 0.0)
            total = cfg.gamma * n + stage_cost
            if total < best_j:
                best = (n, sol, stage_cost, template.layout)
                best_j = total
                best_n = n
        if best is None:
            raise AllInfeasible(statuses)
        n, sol, stage_cost, lay = best
        xvec = sol.x
        z = np.vstack([xvec[lay.z(j)] for j in range(n + 1)])
        v = np.vstack([xvec[lay.v(i)] for i in range(n)]) if n else np.zeros((0, lay.m))
        s = np.vstack([xvec[lay.s(i)] for i in range(n)])
        return HorizonSolution(
            n_star=best_n, j_star=best_j, z_seq=z, v_seq=v, s_seq=s,
            statuses=statuses, qp_objective=stage_cost,
            solve_time=time.perf_counter() - t0,
        )

    def feasible(self, x) -> bool:
        """Does any candidate horizon admit a feasible program at x?

        Uses the phase-1 LP only; agrees with solve() raising or not.
        """
        for n in range(1, self.cfg.n_max + 1):
            try:
                template = self._template(n)
            except EmptyTightened:
                continue
            ok, _, _ = find_feasible_point(_problem_for(template, x))
            if ok:
                return True
        return False

    def step(self, x):
        sol = self.solve(x)
        return sol.v_seq[0].copy(), sol


def solve_variable_horizon(x, tables: TubeTables,
                           cfg: ControllerConfig) -> HorizonSolution:
    return VariableHorizonController(tables, cfg).solve(x)


def feasible_any_horizon(x, tables: TubeTables, cfg: ControllerConfig) -> bool:
    return VariableHorizonController(tables, cfg).feasible(x)


def control_step(x, tables: TubeTables, cfg: ControllerConfig):
    """One closed-loop decision: returns (input to apply, full solution)."""
    return VariableHorizonController(tables, cfg).step(x)


def verify_solution_inclusion(x, sol: HorizonSolution, tables: TubeTables,
                              cfg: ControllerConfig) -> float:
    """Worst slack of the tube inclusions at the actual solution.

    Recomputes every tightened constraint with |xi(i)| in place of the
    epigraph variables; nonnegative (up to solver tolerance) means the
    plain set-inclusion form of the constraints holds.
    """
    x = np.asarray(x, dtype=float)
    n = sol.n_star
    xi_abs = [np.abs(np.concatenate([sol.z_seq[i], sol.v_seq[i]]))
              for i in range(n)]
    worst = np.inf

    def check(kind, j, vec):
        nonlocal worst
        tight = tighten_constraints(tables, cfg, j, kind)
        lhs = tight.lhs @ vec
        for i in range(j):
            lhs = lhs + tight.coeff @ tight.deltas[i] @ xi_abs[i]
        worst = min(worst, float(np.min(tight.offsets - lhs)))

    if not np.allclose(sol.z_seq[0], x, atol=1e-7):
        return -np.inf
    for j in range(n + 1):
        check("state", j, sol.z_seq[j])
    for j in range(n):
        check("input", j, sol.v_seq[j])
    check("terminal", n, sol.z_seq[n])
    return worst
