"""Halfspace polytopes: { x : h @ x <= b } with a few LP-backed queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .errors import ShapeError
from .setalg import Box

__all__ = ["Polytope"]


@dataclass(frozen=True)
class Polytope:
    h: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        h = np.array(self.h, dtype=float)
        b = np.array(self.b, dtype=float)
        if h.ndim != 2:
            raise ShapeError("constraint matrix must be 2-d")
        if b.shape != (h.shape[0],):
            raise ShapeError(
                f"offset vector shape {b.shape} does not match {h.shape[0]} rows"
            )
        if not (np.all(np.isfinite(h)) and np.all(np.isfinite(b))):
            raise ValueError("polytope data must be finite")
        h.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "b", b)

    @classmethod
    def from_box(cls, box: Box) -> "Polytope":
        n = box.dim
        h = np.vstack([np.eye(n), -np.eye(n)])
        b = np.concatenate([box.upper, -box.lower])
        return cls(h, b)

    @classmethod
    def from_bounds(cls, lower, upper) -> "Polytope":
        return cls.from_box(Box.from_bounds(lower, upper))

    @property
    def dim(self) -> int:
        return self.h.shape[1]

    @property
    def n_rows(self) -> int:
        return self.h.shape[0]

    def contains(self, x, tol: float = 1e-9) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.h @ x <= self.b + tol))

    def support(self, direction) -> float:
        """max direction @ x over the polytope; inf when unbounded."""
        direction = np.asarray(direction, dtype=float)
        res = linprog(-direction, A_ub=self.h, b_ub=self.b,
                      bounds=[(None, None)] * self.dim, method="highs")
        if res.status == 3:
            return float("inf")
        if res.status == 2:
            return float("-inf")
        if res.status != 0:
            raise RuntimeError(f"support LP failed: {res.message}")
        return float(-res.fun)

    def is_empty(self) -> bool:
        res = linprog(np.zeros(self.dim), A_ub=self.h, b_ub=self.b,
                      bounds=[(None, None)] * self.dim, method="highs")
        return res.status == 2

    def bounding_box(self) -> Box:
        lo = np.empty(self.dim)
        hi = np.empty(self.dim)
        for i in range(self.dim):
            e = np.zeros(self.dim)
            e[i] = 1.0
            hi[i] = self.support(e)
            lo[i] = -self.support(-e)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("polytope is unbounded; no bounding box")
        return Box.from_bounds(lo, hi)

    def intersect(self, other: "Polytope") -> "Polytope":
        if other.dim != self.dim:
            raise ShapeError("dimension mismatch in intersection")
        return Polytope(np.vstack([self.h, other.h]),
                        np.concatenate([self.b, other.b]))

    def contains_polytope(self, other: "Polytope", tol: float = 1e-9) -> bool:
        """True when every point of `other` satisfies all rows of self."""
        for hi, bi in zip(self.h, self.b):
            if other.support(hi) > bi + tol:
                return False
        return True

    def contains_box(self, box: Box, tol: float = 1e-9) -> bool:
        vals = self.h @ box.center + np.abs(self.h) @ box.radius
        return bool(np.all(vals <= self.b + tol))

    def sample(self, rng: np.random.Generator, count: int,
               max_tries: int = 10000) -> np.ndarray:
        """Rejection-sample `count` points; needs a bounded nonempty set."""
        box = self.bounding_box()
        out = np.empty((count, self.dim))
        got = 0
        tries = 0
        while got < count:
            if tries >= max_tries:
                raise RuntimeError("rejection sampling budget exhausted")
            tries += 1
            cand = box.sample(rng, size=count)
            keep = np.all(self.h @ cand.T <= self.b[:, None] + 1e-12, axis=0)
            take = cand[keep][: count - got]
            out[got:got + take.shape[0]] = take
            got += take.shape[0]
        return out

    def normalized(self) -> "Polytope":
        """Scale every row to unit max-norm (drops exact zero rows)."""
        keep_h = []
        keep_b = []
        for hi, bi in zip(self.h, self.b):
            s = np.max(np.abs(hi))
            if s == 0.0:
                continue
            keep_h.append(hi / s)
            keep_b.append(bi / s)
        if not keep_h:
            raise ValueError("polytope has no nonzero rows")
        return Polytope(np.array(keep_h), np.array(keep_b))

    def remove_redundant(self, tol: float = 1e-9) -> "Polytope":
        """Drop rows whose removal does not change the set (LP per row)."""
        h = self.h
        b = self.b
        keep = np.ones(self.n_rows, dtype=bool)
        for i in range(self.n_rows):
            keep[i] = False
            rest = keep.copy()
            res = linprog(-h[i], A_ub=h[rest], b_ub=b[rest] if np.any(rest) else None,
                          bounds=[(None, None)] * self.dim, method="highs") \
                if np.any(rest) else None
            if res is None or res.status == 3:
                redundant = False
            elif res.status == 0:
                redundant = -res.fun <= b[i] + tol
            else:
                redundant = False
            if not redundant:
                keep[i] = True
        return Polytope(h[keep], b[keep])
