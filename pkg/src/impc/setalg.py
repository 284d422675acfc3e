"""Interval matrices, matrix zonotopes and the transport operator.

The two set representations used throughout:

* interval matrix: a center matrix C plus an elementwise nonnegative
  radius Delta, describing { A : |A - C| <= Delta entrywise }.
* matrix zonotope: a center matrix plus a finite list of generator
  matrices, describing { C + sum_i beta_i G_i : |beta_i| <= 1 }.

The transport operator encloses the product of an interval matrix with
a matrix zonotope by another matrix zonotope, which is what makes the
uncertainty tube of the controller precomputable offline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ContainmentSolverError, ShapeError

__all__ = [
    "IntervalMatrix",
    "MatrixZonotope",
    "Box",
    "box_of_zonotope",
    "entry_decomposition",
    "transport",
    "transport_iter",
    "interval_product_bound",
    "zonotope_contains",
]


def _freeze(a) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class IntervalMatrix:
    """Set of matrices within an elementwise radius of a center."""

    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _freeze(self.center))
        object.__setattr__(self, "radius", _freeze(self.radius))
        if self.center.ndim != 2:
            raise ShapeError(f"center must be 2-d, got shape {self.center.shape}")
        if self.center.shape != self.radius.shape:
            raise ShapeError(
                f"center shape {self.center.shape} != radius shape {self.radius.shape}"
            )
        if not np.all(np.isfinite(self.center)) or not np.all(np.isfinite(self.radius)):
            raise ValueError("interval matrix entries must be finite")
        if np.any(self.radius < 0):
            raise ValueError("interval radius must be elementwise nonnegative")

    @property
    def shape(self):
        return self.center.shape

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radius

    def contains(self, m, tol: float = 1e-9) -> bool:
        m = np.asarray(m, dtype=float)
        if m.shape != self.shape:
            raise ShapeError(f"member shape {m.shape} != interval shape {self.shape}")
        return bool(np.all(np.abs(m - self.center) <= self.radius + tol))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        """One member drawn uniformly over the entry box."""
        return self.center + self.radius * rng.uniform(-1.0, 1.0, size=self.shape)

    def corner(self, signs) -> np.ndarray:
        """The member at a given sign pattern of the radius."""
        signs = np.asarray(signs, dtype=float)
        if signs.shape != self.shape:
            raise ShapeError("sign pattern shape mismatch")
        return self.center + signs * self.radius

    def __add__(self, other: "IntervalMatrix") -> "IntervalMatrix":
        # Minkowski sum: centers add, radii add.
        if not isinstance(other, IntervalMatrix):
            return NotImplemented
        if self.shape != other.shape:
            raise ShapeError("interval sum needs equal shapes")
        return IntervalMatrix(self.center + other.center, self.radius + other.radius)

    def to_zonotope(self) -> "MatrixZonotope":
        """Equivalent zonotope with one single-entry generator per nonzero radius."""
        gens = [g for g in entry_matrices(self.radius) if np.any(g != 0.0)]
        return MatrixZonotope(self.center, gens)


@dataclass(frozen=True)
class MatrixZonotope:
    """Center matrix plus generator matrices, coefficients in [-1, 1]."""

    center: np.ndarray
    generators: tuple

    def __init__(self, center, generators=()):
        object.__setattr__(self, "center", _freeze(center))
        gens = tuple(_freeze(g) for g in generators)
        object.__setattr__(self, "generators", gens)
        if self.center.ndim != 2:
            raise ShapeError(f"center must be 2-d, got shape {self.center.shape}")
        for g in gens:
            if g.shape != self.center.shape:
                raise ShapeError(
                    f"generator shape {g.shape} != center shape {self.center.shape}"
                )

    @property
    def shape(self):
        return self.center.shape

    @property
    def n_generators(self) -> int:
        return len(self.generators)

    def member(self, beta) -> np.ndarray:
        """The member at explicit coefficients beta (no clipping)."""
        beta = np.asarray(beta, dtype=float)
        if beta.shape != (self.n_generators,):
            raise ShapeError("coefficient vector has wrong length")
        out = self.center.copy()
        for b, g in zip(beta, self.generators):
            out += b * g
        return out

    def sample(self, rng: np.random.Generator, vertex: bool = False) -> np.ndarray:
        if vertex:
            beta = rng.choice([-1.0, 1.0], size=self.n_generators)
        else:
            beta = rng.uniform(-1.0, 1.0, size=self.n_generators)
        return self.member(beta)

    def __add__(self, other: "MatrixZonotope") -> "MatrixZonotope":
        # Minkowski sum: centers add, generator lists concatenate.
        if not isinstance(other, MatrixZonotope):
            return NotImplemented
        if self.shape != other.shape:
            raise ShapeError("zonotope sum needs equal shapes")
        return MatrixZonotope(self.center + other.center,
                              self.generators + other.generators)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in vector space: center +- radius."""

    center: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", _freeze(self.center))
        object.__setattr__(self, "radius", _freeze(self.radius))
        if self.center.ndim != 1 or self.center.shape != self.radius.shape:
            raise ShapeError("box center and radius must be equal-length vectors")
        if np.any(self.radius < 0):
            raise ValueError("box radius must be nonnegative")
        if not np.all(np.isfinite(self.center)) or not np.all(np.isfinite(self.radius)):
            raise ValueError("box entries must be finite")

    @classmethod
    def zero(cls, n: int) -> "Box":
        return cls(np.zeros(n), np.zeros(n))

    @classmethod
    def from_bounds(cls, lower, upper) -> "Box":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        if np.any(upper < lower):
            raise ValueError("upper bound below lower bound")
        return cls((lower + upper) / 2.0, (upper - lower) / 2.0)

    @property
    def dim(self) -> int:
        return self.center.shape[0]

    @property
    def lower(self) -> np.ndarray:
        return self.center - self.radius

    @property
    def upper(self) -> np.ndarray:
        return self.center + self.radius

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.abs(x - self.center) <= self.radius + tol))

    def sample(self, rng: np.random.Generator, size=None) -> np.ndarray:
        if size is None:
            return self.center + self.radius * rng.uniform(-1.0, 1.0, self.dim)
        return self.center + self.radius * rng.uniform(-1.0, 1.0, (size, self.dim))

    def sample_vertex(self, rng: np.random.Generator) -> np.ndarray:
        return self.center + self.radius * rng.choice([-1.0, 1.0], self.dim)

    def __add__(self, other: "Box") -> "Box":
        if not isinstance(other, Box):
            return NotImplemented
        return Box(self.center + other.center, self.radius + other.radius)

    def as_interval(self) -> IntervalMatrix:
        """Column-vector view as an interval matrix."""
        return IntervalMatrix(self.center[:, None], self.radius[:, None])

    def to_zonotope(self) -> MatrixZonotope:
        """Column-vector zonotope with one generator per nonzero radius entry."""
        gens = [g for g in entry_matrices(self.radius[:, None]) if np.any(g != 0.0)]
        return MatrixZonotope(self.center[:, None], gens)


def entry_matrices(m: np.ndarray):
    """All single-entry matrices of m, row-major; they sum back to m."""
    m = np.asarray(m, dtype=float)
    rows, cols = m.shape
    out = []
    for i in range(rows):
        for j in range(cols):
            e = np.zeros((rows, cols))
            e[i, j] = m[i, j]
            out.append(e)
    return out


def entry_decomposition(m: MatrixZonotope):
    """Single-entry decomposition of a zonotope's center, row-major order.

    Kept as an operation on zonotopes for symmetry with the transport
    construction; the generators of m play no role here.
    """
    return entry_matrices(m.center)


def box_of_zonotope(m: MatrixZonotope) -> IntervalMatrix:
    """Tightest interval matrix containing a matrix zonotope.

    The radius is the entrywise sum of generator magnitudes.
    """
    radius = np.zeros(m.shape)
    for g in m.generators:
        radius += np.abs(g)
    return IntervalMatrix(m.center, radius)


def transport(imat: IntervalMatrix, m: MatrixZonotope) -> MatrixZonotope:
    """Zonotope enclosure of { A @ X : A in imat, X in m }.

    Center and generators are mapped through the interval center; the
    interval radius contributes one single-entry generator per entry of
    F = radius @ (|center of m| + sum_i |G_i|).  Generators that are
    exactly zero are dropped (containment is unaffected).
    """
    l, p = imat.shape
    pm, q = m.shape
    if p != pm:
        raise ShapeError(f"cannot multiply {imat.shape} interval by {m.shape} zonotope")
    c = imat.center
    center = c @ m.center
    gens = []
    for g in m.generators:
        cg = c @ g
        if np.any(cg != 0.0):
            gens.append(cg)
    # worst-case magnitude reachable by the radius part of the interval
    mag = np.abs(m.center)
    for g in m.generators:
        mag = mag + np.abs(g)
    f = imat.radius @ mag
    for e in entry_matrices(f):
        if np.any(e != 0.0):
            gens.append(e)
    return MatrixZonotope(center, gens)


def transport_iter(imat: IntervalMatrix, m: MatrixZonotope, j: int) -> MatrixZonotope:
    """j-fold composition of the transport operator; j = 0 returns m."""
    if j < 0:
        raise ValueError("iteration count must be nonnegative")
    if j > 0 and imat.shape[0] != imat.shape[1]:
        raise ShapeError("iterated transport needs a square interval matrix")
    out = m
    for _ in range(j):
        out = transport(imat, out)
    return out


def interval_product_bound(a: IntervalMatrix, b: IntervalMatrix) -> IntervalMatrix:
    """Interval matrix containing all products A @ B for A in a, B in b."""
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    center = a.center @ b.center
    radius = (np.abs(a.center) @ b.radius
              + a.radius @ np.abs(b.center)
              + a.radius @ b.radius)
    return IntervalMatrix(center, radius)


def zonotope_contains(m: MatrixZonotope, x, tol: float = 1e-9) -> bool:
    """Exact membership test for a matrix in a matrix zonotope.

    Solves the coefficient-recovery feasibility LP.  A solver breakdown
    raises ContainmentSolverError instead of returning a verdict.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != m.shape:
        raise ShapeError(f"candidate shape {x.shape} != zonotope shape {m.shape}")
    resid = (x - m.center).ravel()
    ng = m.n_generators
    if ng == 0:
        return bool(np.max(np.abs(resid), initial=0.0) <= tol)
    # find beta with |beta_i| <= 1 and |G beta - (x - c)| <= tol entrywise
    gmat = np.column_stack([g.ravel() for g in m.generators])
    a_ub = np.vstack([gmat, -gmat])
    b_ub = np.concatenate([resid + tol, -resid + tol])
    res = linprog(
        np.zeros(ng),
        A_ub=a_ub,
        b_ub=b_ub,
        bounds=[(-1.0, 1.0)] * ng,
        method="highs",
    )
    if res.status == 0:
        return True
    if res.status == 2:
        return False
    raise ContainmentSolverError(f"membership LP failed with status {res.status}")
