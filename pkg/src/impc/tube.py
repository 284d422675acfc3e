"""Offline tube tables for the robust controller.

Everything state-independent about the error tube is computed once per
model: per-step boxes of the propagated parameter uncertainty and of the
propagated disturbance, plus cumulative disturbance boxes.  The online
problem then only scales these radii by nominal trajectory magnitudes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ShapeError
from .ident import UncertainModel
from .setalg import Box, IntervalMatrix, box_of_zonotope, transport

__all__ = ["ClosedLoopInterval", "TubeTables", "precompute_tube",
           "recursion_radii", "load_or_compute"]


@dataclass(frozen=True)
class ClosedLoopInterval:
    """Interval family of closed-loop matrices A + B K under the model."""

    a_k_hat: np.ndarray
    delta_k: np.ndarray

    def __post_init__(self):
        a = np.array(self.a_k_hat, dtype=float)
        d = np.array(self.delta_k, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ShapeError("closed-loop center must be square")
        if d.shape != a.shape:
            raise ShapeError("closed-loop radius shape mismatch")
        if np.any(d < 0):
            raise ValueError("closed-loop radius must be nonnegative")
        a.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "a_k_hat", a)
        object.__setattr__(self, "delta_k", d)

    @classmethod
    def from_model(cls, model: UncertainModel, k_gain) -> "ClosedLoopInterval":
        k = np.asarray(k_gain, dtype=float)
        if k.shape != (model.m, model.n):
            raise ShapeError(f"gain must be ({model.m}, {model.n}), got {k.shape}")
        return cls(model.a_hat + model.b_hat @ k,
                   model.delta_a + model.delta_b @ np.abs(k))

    def interval(self) -> IntervalMatrix:
        return IntervalMatrix(self.a_k_hat, self.delta_k)

    @property
    def n(self) -> int:
        return self.a_k_hat.shape[0]


@dataclass(frozen=True)
class TubeTables:
    """Precomputed tube data for horizons up to n_max.

    delta_terms[j]   box of the j-step transported parameter uncertainty,
                     zero centered, shape (n, n+m); index 0 is the raw
                     model radius.
    w_terms[j]       box of the j-step transported disturbance set.
    w_cumulative[j]  Minkowski sum of w_terms[0..j-1]; entry 0 is {0}.
    """

    delta_terms: tuple
    w_terms: tuple
    w_cumulative: tuple

    def __post_init__(self):
        if len(self.w_terms) != len(self.delta_terms):
            raise ShapeError("w_terms and delta_terms must have equal length")
        if len(self.w_cumulative) != len(self.w_terms) + 1:
            raise ShapeError("w_cumulative must be one entry longer than w_terms")
        object.__setattr__(self, "delta_terms", tuple(self.delta_terms))
        object.__setattr__(self, "w_terms", tuple(self.w_terms))
        object.__setattr__(self, "w_cumulative", tuple(self.w_cumulative))

    @property
    def n_max(self) -> int:
        return len(self.delta_terms)

    def to_dict(self) -> dict:
        return {
            "delta_terms": [t.radius.tolist() for t in self.delta_terms],
            "w_terms": [t.radius.tolist() for t in self.w_terms],
            "w_cumulative": [t.radius.tolist() for t in self.w_cumulative],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TubeTables":
        delta_terms = tuple(
            IntervalMatrix(np.zeros(np.array(r).shape), np.array(r))
            for r in d["delta_terms"]
        )
        w_terms = tuple(
            Box(np.zeros(len(r)), np.array(r)) for r in d["w_terms"]
        )
        w_cumulative = tuple(
            Box(np.zeros(len(r)), np.array(r)) for r in d["w_cumulative"]
        )
        return cls(delta_terms, w_terms, w_cumulative)

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TubeTables":
        return cls.from_dict(json.loads(Path(path).read_text()))


def cache_key(model: UncertainModel, k_gain, n_max: int) -> str:
    payload = json.dumps(
        {"model": model.to_dict(),
         "k": np.asarray(k_gain, dtype=float).tolist(),
         "n_max": int(n_max)},
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def precompute_tube(model: UncertainModel, k_gain, n_max: int) -> TubeTables:
    """Propagate the uncertainty and disturbance sets n_max steps offline."""
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    cl = ClosedLoopInterval.from_model(model, k_gain)
    i_ak = cl.interval()
    n = model.n
    delta_s = np.hstack([model.delta_a, model.delta_b])

    z_delta = IntervalMatrix(np.zeros_like(delta_s), delta_s).to_zonotope()
    z_w = Box(np.zeros(n), model.w_bar).to_zonotope()

    delta_terms = []
    w_terms = []
    for j in range(n_max):
        if j > 0:
            z_delta = transport(i_ak, z_delta)
            z_w = transport(i_ak, z_w)
        delta_terms.append(box_of_zonotope(z_delta))
        w_box = box_of_zonotope(z_w)
        w_terms.append(Box(w_box.center[:, 0], w_box.radius[:, 0]))

    w_cumulative = [Box.zero(n)]
    for j in range(n_max):
        w_cumulative.append(w_cumulative[-1] + w_terms[j])

    tables = TubeTables(tuple(delta_terms), tuple(w_terms), tuple(w_cumulative))
    radii = recursion_radii(cl, delta_s, n_max)
    for j in range(n_max):
        gap = np.max(np.abs(tables.delta_terms[j].radius - radii[j]))
        if gap > 1e-10:
            raise RuntimeError(
                f"tube tables disagree with the radius recursion at step {j} "
                f"(max gap {gap:.3e}); internal logic error"
            )
    return tables


def recursion_radii(cl: ClosedLoopInterval, delta_s, n_max: int) -> list:
    """Closed-form radii of the transported uncertainty boxes.

    Two independent recursions produce the same numbers; both are
    evaluated and compared at 1e-10 before returning, as a guard against
    silent index or ordering mistakes.
    """
    delta_s = np.asarray(delta_s, dtype=float)
    if delta_s.ndim != 2 or delta_s.shape[0] != cl.n:
        raise ShapeError("delta_s must have n rows")
    if n_max < 1:
        raise ValueError("n_max must be at least 1")
    a_hat = cl.a_k_hat
    d_k = cl.delta_k
    n = cl.n

    # |A_hat^i| for i = 0..n_max-1, powers formed sequentially
    pow_abs = [np.eye(n)]
    acc = np.eye(n)
    for _ in range(n_max - 1):
        acc = a_hat @ acc
        pow_abs.append(np.abs(acc))

    # route one: F_0 = delta_s, F_{j+1} = d_k @ radius_j,
    #            radius_j = sum_i |A^(j-i)| F_i
    f_terms = [delta_s]
    radii = []
    for j in range(n_max):
        r = np.zeros_like(delta_s)
        for i in range(j + 1):
            r += pow_abs[j - i] @ f_terms[i]
        radii.append(r)
        f_terms.append(d_k @ r)

    # route two: accumulation matrices, P(1) = I and
    # P(j+1) = |A^j| + sum_{h=1..j} P(h) d_k |A^(j-h)|, F_j = d_k P(j) delta_s
    p_terms = [np.eye(n)]
    for j in range(1, n_max):
        p = pow_abs[j].copy()
        for h in range(j):
            p += p_terms[h] @ d_k @ pow_abs[j - 1 - h]
        p_terms.append(p)
    f_alt = [delta_s] + [d_k @ p @ delta_s for p in p_terms[:n_max]]
    radii_alt = []
    for j in range(n_max):
        r = np.zeros_like(delta_s)
        for i in range(j + 1):
            r += pow_abs[j - i] @ f_alt[i]
        radii_alt.append(r)

    for j in range(n_max):
        gap = np.max(np.abs(radii[j] - radii_alt[j]))
        if gap > 1e-10:
            raise RuntimeError(
                f"radius recursions disagree at step {j} (max gap {gap:.3e})"
            )
    return radii


def load_or_compute(model: UncertainModel, k_gain, n_max: int,
                    cache_dir=None) -> TubeTables:
    """Reuse a cached table file when one exists for this exact input."""
    if cache_dir is None:
        return precompute_tube(model, k_gain, n_max)
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    path = cache_dir / f"tube_{cache_key(model, k_gain, n_max)}.json"
    if path.exists():
        return TubeTables.load(path)
    tables = precompute_tube(model, k_gain, n_max)
    tables.save(path)
    return tables
