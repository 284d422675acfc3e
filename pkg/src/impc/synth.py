"""Offline synthesis checks: gain validation, limit set, terminal set.

The ancillary gain K is a user input; this module gathers evidence that
the closed-loop interval family is robustly stable, computes the box the
disturbance drives the closed loop into, and constructs a terminal set
that is robustly invariant for the whole family.

Two terminal constructions exist.  When the nonnegative matrix
|A_K_hat| + Delta_K is Schur, an invariant box is grown from the limit
set by a scalar fixed-point iteration.  That condition is impossible for
some perfectly controllable plants (any system whose open-loop rows the
input cannot touch, like a double integrator, has |A_K| spectral radius
at least one for every K), so the general route intersects preimages of
the constraint region over the vertex matrices of the family until the
set stops shrinking, which yields a polytopic robust invariant set.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import NotContractive, NoValidTerminalSet, ShapeError
from .ident import UncertainModel
from .polytope import Polytope
from .setalg import Box, box_of_zonotope, transport
from .tube import ClosedLoopInterval

__all__ = ["GainEvidence", "SynthesisReport", "validate_gain",
           "compute_x_infinity", "build_terminal_set", "synthesize"]

VERTEX_LIMIT = 1 << 16


def _spectral_radius(mat) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(mat))))


def _batched_rho(mats) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(mats))))


def _sign_patterns(count: int) -> np.ndarray:
    if count == 0:
        return np.zeros((1, 0))
    cols = list(itertools.product((-1.0, 1.0), repeat=count))
    return np.array(cols)


def power_series_matrix(cl: ClosedLoopInterval, tol: float = 1e-14,
                        max_terms: int = 10000):
    """Sum of |A_K_hat^j| over j >= 0, or None when it does not converge."""
    if _spectral_radius(cl.a_k_hat) >= 1.0:
        return None
    total = np.eye(cl.n)
    acc = np.eye(cl.n)
    for _ in range(max_terms):
        acc = cl.a_k_hat @ acc
        term = np.abs(acc)
        total += term
        if np.max(term) <= tol * max(np.max(total), 1.0):
            return total
    return None


@dataclass(frozen=True)
class GainEvidence:
    """Stability evidence for a candidate gain, strongest to weakest.

    vertex/sampled: spectral radius < 1 at every radius-vertex matrix and
    at random interior members (necessary, not sufficient).
    sufficient: the nonnegative envelope |A_K_hat| + Delta_K is Schur,
    which covers the entire family at once.
    series: the tube radius series is summable, a weaker condition that
    the envelope test implies; it is what the limit-set computation needs.
    """

    vertex_ok: bool
    vertex_rho: float
    sampled_ok: bool
    sampled_rho: float
    sufficient_ok: bool
    sufficient_rho: float
    series_ok: bool
    series_rho: float
    n_vertices: int
    n_samples: int
    seed: int

    @property
    def family_stable_evidence(self) -> bool:
        return self.vertex_ok and self.sampled_ok

    def to_dict(self) -> dict:
        return {k: (bool(v) if isinstance(v, (bool, np.bool_)) else
                    (int(v) if isinstance(v, (int, np.integer)) else float(v)))
                for k, v in self.__dict__.items()}


def validate_gain(model: UncertainModel, k_gain, n_samples: int = 10000,
                  seed: int = 0) -> GainEvidence:
    """Check closed-loop stability of the model family under a gain."""
    k = np.asarray(k_gain, dtype=float)
    cl = ClosedLoopInterval.from_model(model, k)
    n, m = model.n, model.m
    m_k = np.vstack([np.eye(n), k])
    delta_s = np.hstack([model.delta_a, model.delta_b])

    nz = np.argwhere(delta_s > 0)
    if 2 ** len(nz) > VERTEX_LIMIT:
        raise ValueError(
            f"{2 ** len(nz)} vertex matrices exceed the enumeration limit"
        )
    signs = _sign_patterns(len(nz))
    verts = np.zeros((signs.shape[0], n, n + m))
    for col, (i, j) in enumerate(nz):
        verts[:, i, j] = signs[:, col] * delta_s[i, j]
    vertex_rho = _batched_rho(cl.a_k_hat[None] + verts @ m_k)

    rng = np.random.default_rng(seed)
    draws = rng.uniform(-1.0, 1.0, size=(n_samples, n, n + m)) * delta_s
    sampled_rho = _batched_rho(cl.a_k_hat[None] + draws @ m_k)

    sufficient_rho = _spectral_radius(np.abs(cl.a_k_hat) + cl.delta_k)

    series = power_series_matrix(cl)
    if series is None:
        series_ok, series_rho = False, float("inf")
    else:
        series_rho = _spectral_radius(cl.delta_k @ series)
        series_ok = series_rho < 1.0

    return GainEvidence(
        vertex_ok=bool(vertex_rho < 1.0), vertex_rho=vertex_rho,
        sampled_ok=bool(sampled_rho < 1.0), sampled_rho=sampled_rho,
        sufficient_ok=bool(sufficient_rho < 1.0), sufficient_rho=sufficient_rho,
        series_ok=series_ok, series_rho=series_rho,
        n_vertices=signs.shape[0], n_samples=n_samples, seed=seed,
    )


def compute_x_infinity(cl: ClosedLoopInterval, w_bar, eps: float = 1e-3,
                       max_terms: int = 10000) -> Box:
    """Box containing the limit set of the disturbed closed loop.

    Sums the boxes of the transported disturbance set and inflates the
    truncated series by (1 + eps).  Requires the summability gate; a
    divergent family raises NotContractive.
    """
    w_bar = np.asarray(w_bar, dtype=float)
    if w_bar.shape != (cl.n,):
        raise ShapeError("w_bar must be an n-vector")
    if eps <= 0:
        raise ValueError("eps must be positive")
    series = power_series_matrix(cl)
    if series is None or _spectral_radius(cl.delta_k @ series) >= 1.0:
        raise NotContractive(
            "closed-loop family fails the series summability check"
        )
    z = Box(np.zeros(cl.n), w_bar).to_zonotope()
    i_ak = cl.interval()
    acc = np.zeros(cl.n)
    # stop at the first term small relative to the accumulated radius,
    # then inflate so the discarded tail stays covered
    for j in range(max_terms):
        if j > 0:
            z = transport(i_ak, z)
        term = box_of_zonotope(z).radius[:, 0]
        acc = acc + term
        if np.max(term) <= eps * np.max(acc):
            break
    else:
        raise NotContractive("limit-set series did not settle")
    return Box(np.zeros(cl.n), (1.0 + eps) * acc)


def _family_vertices(cl: ClosedLoopInterval) -> np.ndarray:
    """All corner matrices of the closed-loop interval family."""
    nz = np.argwhere(cl.delta_k > 0)
    if 2 ** len(nz) > VERTEX_LIMIT:
        raise ValueError("closed-loop family has too many vertex matrices")
    signs = _sign_patterns(len(nz))
    verts = np.tile(cl.a_k_hat, (signs.shape[0], 1, 1))
    for col, (i, j) in enumerate(nz):
        verts[:, i, j] += signs[:, col] * cl.delta_k[i, j]
    return verts


def _dedupe_rows(h: np.ndarray, b: np.ndarray):
    """Normalize rows, then keep only the tightest of identical directions."""
    scale = np.max(np.abs(h), axis=1)
    keep = scale > 0
    h, b, scale = h[keep], b[keep], scale[keep]
    h = h / scale[:, None]
    b = b / scale
    order = {}
    for i in range(h.shape[0]):
        key = tuple(np.round(h[i], 12))
        if key not in order or b[i] < order[key][1]:
            order[key] = (i, b[i])
    idx = sorted(i for i, _ in order.values())
    return h[idx], b[idx]


def _terminal_box(cl: ClosedLoopInterval, w_bar, state_set, input_set,
                  k_gain, eps: float):
    """Grow an invariant box from the limit set; envelope must be Schur."""
    env = np.abs(cl.a_k_hat) + cl.delta_k
    s = compute_x_infinity(cl, w_bar, eps=eps).radius
    for _ in range(100000):
        nxt = env @ s + w_bar
        if np.max(np.abs(nxt - s)) <= 1e-13 * (1.0 + np.max(s)):
            s = nxt
            break
        s = nxt
    s = (1.0 + eps) * s
    if np.any(env @ s + w_bar > s + 1e-12):
        raise NoValidTerminalSet("box iteration failed its invariance check")
    box = Box(np.zeros(cl.n), s)
    if not state_set.contains_box(box):
        raise NoValidTerminalSet("invariant box leaves the state constraints")
    ku = np.abs(input_set.h @ k_gain) @ s
    if np.any(ku > input_set.b + 1e-9):
        raise NoValidTerminalSet("invariant box violates the input constraints")
    return Polytope.from_box(box), 0


def _terminal_polytope(cl: ClosedLoopInterval, w_bar, state_set, input_set,
                       k_gain, max_iter: int = 100):
    """Maximal robust invariant polytope inside the constraint region.

    Shrinks the admissible region by robust preimages over the vertex
    matrices until every preimage row is already implied, certifying
    invariance for the whole interval family under any disturbance.
    """
    k = np.asarray(k_gain, dtype=float)
    verts = _family_vertices(cl)
    region = Polytope(
        np.vstack([state_set.h, input_set.h @ k]),
        np.concatenate([state_set.b, input_set.b]),
    ).normalized()
    omega = region
    for it in range(max_iter):
        if omega.is_empty():
            raise NoValidTerminalSet("invariant candidate became empty")
        pre_h = np.vstack([omega.h @ v for v in verts])
        pre_b = np.concatenate(
            [omega.b - np.abs(omega.h) @ w_bar] * len(verts)
        )
        pre_h, pre_b = _dedupe_rows(pre_h, pre_b)
        worst = -np.inf
        fresh_h, fresh_b = [], []
        for hrow, brow in zip(pre_h, pre_b):
            margin = omega.support(hrow) - brow
            worst = max(worst, margin)
            if margin > 1e-9:
                fresh_h.append(hrow)
                fresh_b.append(brow)
        if not fresh_h:
            return omega, it + 1
        omega = Polytope(
            np.vstack([omega.h, np.array(fresh_h)]),
            np.concatenate([omega.b, np.array(fresh_b)]),
        )
        omega = omega.remove_redundant()
    raise NoValidTerminalSet(f"no fixed point after {max_iter} iterations")


def build_terminal_set(cl: ClosedLoopInterval, w_bar, state_set: Polytope,
                       input_set: Polytope, k_gain, eps: float = 1e-3):
    """Robust invariant terminal set for the closed-loop family.

    Returns (polytope, metadata dict).  Prefers the box construction when
    its spectral condition holds, otherwise falls back to the polytopic
    fixed-point route.
    """
    w_bar = np.asarray(w_bar, dtype=float)
    env_rho = _spectral_radius(np.abs(cl.a_k_hat) + cl.delta_k)
    if env_rho < 1.0:
        poly, iters = _terminal_box(cl, w_bar, state_set, input_set,
                                    np.asarray(k_gain, dtype=float), eps)
        route = "box"
    else:
        series = power_series_matrix(cl)
        if series is None or _spectral_radius(cl.delta_k @ series) >= 1.0:
            raise NotContractive(
                "family fails both the envelope and summability gates"
            )
        poly, iters = _terminal_polytope(cl, w_bar, state_set, input_set,
                                         np.asarray(k_gain, dtype=float))
        route = "polytope"
    if poly.is_empty():
        raise NoValidTerminalSet("terminal construction returned an empty set")
    return poly, {"route": route, "iterations": iters, "envelope_rho": env_rho}


@dataclass(frozen=True)
class SynthesisReport:
    gain: GainEvidence
    x_infinity: Box
    terminal_set: Polytope
    terminal_route: str
    terminal_iterations: int
    x_inf_inside_terminal: bool

    def to_dict(self) -> dict:
        return {
            "gain": self.gain.to_dict(),
            "x_infinity": {"center": self.x_infinity.center.tolist(),
                           "radius": self.x_infinity.radius.tolist()},
            "terminal_set": {"h": self.terminal_set.h.tolist(),
                             "b": self.terminal_set.b.tolist()},
            "terminal_route": self.terminal_route,
            "terminal_iterations": self.terminal_iterations,
            "x_inf_inside_terminal": self.x_inf_inside_terminal,
        }

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))


def synthesize(model: UncertainModel, k_gain, state_set: Polytope,
               input_set: Polytope, eps: float = 1e-3, seed: int = 0,
               n_samples: int = 10000) -> SynthesisReport:
    """Run all offline checks and constructions for one model and gain."""
    evidence = validate_gain(model, k_gain, n_samples=n_samples, seed=seed)
    if not evidence.family_stable_evidence:
        raise NotContractive(
            f"gain fails the stability evidence: vertex rho {evidence.vertex_rho:.4f}, "
            f"sampled rho {evidence.sampled_rho:.4f}"
        )
    if not evidence.series_ok:
        raise NotContractive(
            f"tube series is not summable (rho {evidence.series_rho:.4f})"
        )
    cl = ClosedLoopInterval.from_model(model, k_gain)
    x_inf = compute_x_infinity(cl, model.w_bar, eps=eps)
    terminal, info = build_terminal_set(cl, model.w_bar, state_set, input_set,
                                        k_gain, eps=eps)
    inside = terminal.contains_box(x_inf, tol=1e-9)
    return SynthesisReport(
        gain=evidence, x_infinity=x_inf, terminal_set=terminal,
        terminal_route=info["route"], terminal_iterations=info["iterations"],
        x_inf_inside_terminal=inside,
    )
