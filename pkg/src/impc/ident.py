"""Set-valued identification of linear dynamics from one noisy trajectory.

Input: states x(0..T), inputs u(0..T-1) and an elementwise disturbance
bound w_bar with x(k+1) = A x(k) + B u(k) + w(k), |w(k)| <= w_bar.

Two routes produce an interval matrix guaranteed to contain [A B]:

* dd_interval_bounds: one-shot least-squares center with a radius built
  from the pseudoinverse of the stacked data.  Cheap, can be loose.
* sm_interval_bounds: exact entrywise extremes of the set of parameters
  consistent with the data, found by a pair of LPs per entry.  Tight by
  construction; never wider than the first route.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np
from scipy.optimize import linprog

from .errors import InconsistentData, RankDeficient, ShapeError, UnboundedParameter
from .setalg import IntervalMatrix

__all__ = ["Dataset", "DataMatrices", "UncertainModel",
           "build_data_matrices", "dd_interval_bounds", "sm_interval_bounds"]

RANK_TOL = 1e-8


@dataclass(frozen=True)
class Dataset:
    """One recorded trajectory plus the disturbance bound it was run under."""

    states: np.ndarray   # (T+1, n)
    inputs: np.ndarray   # (T, m)
    w_bar: np.ndarray    # (n,)

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        inputs = np.array(self.inputs, dtype=float)
        w_bar = np.array(self.w_bar, dtype=float)
        if states.ndim != 2 or inputs.ndim != 2:
            raise ShapeError("states and inputs must be 2-d arrays")
        if states.shape[0] != inputs.shape[0] + 1:
            raise ShapeError(
                f"need T+1 states for T inputs, got {states.shape[0]} states "
                f"and {inputs.shape[0]} inputs"
            )
        if inputs.shape[0] < 1:
            raise ValueError("dataset must contain at least one transition")
        if w_bar.shape != (states.shape[1],):
            raise ShapeError("w_bar length must match the state dimension")
        if np.any(w_bar < 0):
            raise ValueError("w_bar must be elementwise nonnegative")
        for arr in (states, inputs, w_bar):
            if not np.all(np.isfinite(arr)):
                raise ValueError("dataset arrays must be finite")
            arr.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "w_bar", w_bar)

    @property
    def n(self) -> int:
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.inputs.shape[1]

    @property
    def t(self) -> int:
        return self.inputs.shape[0]

    def to_csv(self, path):
        """Write columns k, x_1..x_n, u_1..u_m; the last row has no input."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            header = (["k"] + [f"x_{i+1}" for i in range(self.n)]
                      + [f"u_{j+1}" for j in range(self.m)])
            writer.writerow(header)
            for k in range(self.t + 1):
                row = [str(k)] + [repr(float(v)) for v in self.states[k]]
                if k < self.t:
                    row += [repr(float(v)) for v in self.inputs[k]]
                else:
                    row += [""] * self.m
                writer.writerow(row)

    @classmethod
    def from_csv(cls, path, w_bar) -> "Dataset":
        path = Path(path)
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            x_cols = [i for i, name in enumerate(header) if name.startswith("x_")]
            u_cols = [i for i, name in enumerate(header) if name.startswith("u_")]
            if not x_cols:
                raise ValueError(f"{path}: no x_* columns in header")
            states = []
            inputs = []
            for row in reader:
                if not row or not any(cell.strip() for cell in row):
                    continue
                states.append([float(row[i]) for i in x_cols])
                u_vals = [row[i].strip() for i in u_cols]
                if all(u_vals):
                    inputs.append([float(v) for v in u_vals])
        return cls(np.array(states), np.array(inputs), np.asarray(w_bar, dtype=float))


class DataMatrices(NamedTuple):
    x_plus: np.ndarray    # (n, T) successors
    x_minus: np.ndarray   # (n, T) predecessors
    u_minus: np.ndarray   # (m, T) applied inputs
    phi: np.ndarray       # (n+m, T) stacked regressors
    rank: int


def build_data_matrices(data: Dataset, rank_tol: float = RANK_TOL) -> DataMatrices:
    """Arrange the trajectory into regression form and check excitation.

    Raises RankDeficient when the stacked regressor matrix does not have
    full row rank n+m (rank computed with a relative singular value cut).
    """
    n, m, t = data.n, data.m, data.t
    if t < n + m:
        raise ValueError(f"need at least n+m={n+m} transitions, got {t}")
    x_plus = data.states[1:].T.copy()
    x_minus = data.states[:-1].T.copy()
    u_minus = data.inputs.T.copy()
    phi = np.vstack([x_minus, u_minus])
    svals = np.linalg.svd(phi, compute_uv=False)
    rank = int(np.sum(svals > rank_tol * svals[0])) if svals.size else 0
    if rank < n + m:
        raise RankDeficient(rank, n + m)
    return DataMatrices(x_plus, x_minus, u_minus, phi, rank)


@dataclass(frozen=True)
class UncertainModel:
    """Interval description of the dynamics: [A B] within center +- radius."""

    a_hat: np.ndarray
    b_hat: np.ndarray
    delta_a: np.ndarray
    delta_b: np.ndarray
    w_bar: np.ndarray

    def __post_init__(self):
        a_hat = np.array(self.a_hat, dtype=float)
        b_hat = np.array(self.b_hat, dtype=float)
        delta_a = np.array(self.delta_a, dtype=float)
        delta_b = np.array(self.delta_b, dtype=float)
        w_bar = np.array(self.w_bar, dtype=float)
        n = a_hat.shape[0]
        if a_hat.shape != (n, n):
            raise ShapeError("a_hat must be square")
        if b_hat.ndim != 2 or b_hat.shape[0] != n:
            raise ShapeError("b_hat must have n rows")
        if delta_a.shape != a_hat.shape or delta_b.shape != b_hat.shape:
            raise ShapeError("radius shapes must match center shapes")
        if np.any(delta_a < 0) or np.any(delta_b < 0):
            raise ValueError("radii must be nonnegative")
        if w_bar.shape != (n,) or np.any(w_bar < 0):
            raise ValueError("w_bar must be a nonnegative n-vector")
        for arr in (a_hat, b_hat, delta_a, delta_b, w_bar):
            arr.setflags(write=False)
        object.__setattr__(self, "a_hat", a_hat)
        object.__setattr__(self, "b_hat", b_hat)
        object.__setattr__(self, "delta_a", delta_a)
        object.__setattr__(self, "delta_b", delta_b)
        object.__setattr__(self, "w_bar", w_bar)

    @property
    def n(self) -> int:
        return self.a_hat.shape[0]

    @property
    def m(self) -> int:
        return self.b_hat.shape[1]

    def theta_interval(self) -> IntervalMatrix:
        """The joint [A B] interval."""
        return IntervalMatrix(np.hstack([self.a_hat, self.b_hat]),
                              np.hstack([self.delta_a, self.delta_b]))

    def contains(self, a, b, tol: float = 1e-9) -> bool:
        return self.theta_interval().contains(np.hstack([a, b]), tol=tol)

    def to_dict(self) -> dict:
        return {
            "a_hat": self.a_hat.tolist(),
            "b_hat": self.b_hat.tolist(),
            "delta_a": self.delta_a.tolist(),
            "delta_b": self.delta_b.tolist(),
            "w_bar": self.w_bar.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "UncertainModel":
        return cls(np.array(d["a_hat"]), np.array(d["b_hat"]),
                   np.array(d["delta_a"]), np.array(d["delta_b"]),
                   np.array(d["w_bar"]))


def dd_interval_bounds(data: Dataset) -> UncertainModel:
    """Pseudoinverse-based interval: center X+ phi^+, radius w_bar 1' |phi^+|.

    Sound because the residual X+ - theta phi is a disturbance sequence
    bounded by w_bar columnwise, and phi^+ is a right inverse of phi.
    """
    mats = build_data_matrices(data)
    n, m = data.n, data.m
    phi_pinv = np.linalg.pinv(mats.phi, rcond=RANK_TOL)   # (T, n+m)
    center = mats.x_plus @ phi_pinv
    radius = np.outer(data.w_bar, np.ones(data.t)) @ np.abs(phi_pinv)
    return UncertainModel(center[:, :n], center[:, n:],
                          radius[:, :n], radius[:, n:], data.w_bar)


def sm_interval_bounds(data: Dataset) -> UncertainModel:
    """Exact entrywise hull of all parameters consistent with the data.

    Row i of [A B] must satisfy, for every sample k,
        x_i(k+1) - w_bar_i <= theta_i @ phi(k) <= x_i(k+1) + w_bar_i.
    Each entry's min and max over that polyhedron comes from an LP pair.
    No excitation rank condition is required, but a direction the data
    never excites leaves the entry unbounded, which is reported.
    """
    n, m, t = data.n, data.m, data.t
    x_plus = data.states[1:].T
    phi = np.vstack([data.states[:-1].T, data.inputs.T])   # (n+m, T)
    a_ub = np.vstack([phi.T, -phi.T])                       # (2T, n+m)
    lower = np.empty((n, n + m))
    upper = np.empty((n, n + m))
    for i in range(n):
        b_ub = np.concatenate([x_plus[i] + data.w_bar[i],
                               -(x_plus[i] - data.w_bar[i])])
        for j in range(n + m):
            cost = np.zeros(n + m)
            cost[j] = 1.0
            lo = linprog(cost, A_ub=a_ub, b_ub=b_ub,
                         bounds=[(None, None)] * (n + m), method="highs")
            if lo.status == 2:
                raise InconsistentData(
                    f"row {i}: no parameter explains the data within w_bar"
                )
            if lo.status == 3:
                raise UnboundedParameter(i, j)
            if lo.status != 0:
                raise RuntimeError(f"membership LP failed: {lo.message}")
            hi = linprog(-cost, A_ub=a_ub, b_ub=b_ub,
                         bounds=[(None, None)] * (n + m), method="highs")
            if hi.status == 3:
                raise UnboundedParameter(i, j)
            if hi.status != 0:
                raise RuntimeError(f"membership LP failed: {hi.message}")
            lower[i, j] = lo.fun
            upper[i, j] = -hi.fun
    center = (lower + upper) / 2.0
    radius = (upper - lower) / 2.0
    radius[radius < 0] = 0.0
    return UncertainModel(center[:, :n], center[:, n:],
                          radius[:, :n], radius[:, n:], data.w_bar)
