"""Dense convex QP and LP solving with deterministic behavior.

Strategy: LPs go to HiGHS (via scipy.optimize.linprog), which is exact
enough for the small dense problems produced here and detects both
infeasibility and unboundedness reliably.  Convex QPs are solved by a
primal active-set method: a phase-1 LP finds a feasible point, then
equality-constrained subproblems are solved on a working set of active
inequality rows.  Pivot ties are broken toward the lowest row index on
both entering and leaving constraints, so runs are reproducible.

Positive semidefinite Hessians without strict curvature (common here:
epigraph variables carry no cost) are handled by a tiny diagonal
regularization, after which the returned point is re-solved ("polished")
on the final active set with the original Hessian so reported objectives
are not biased by the regularization.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ShapeError

__all__ = ["QpStatus", "QpProblem", "QpSolution", "solve_qp", "solve_lp",
           "find_feasible_point"]

FEAS_TOL = 1e-8
STAT_TOL = 1e-8
REG_EPS = 1e-10
MULT_TOL = 1e-9


class QpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    MAXITER = "maxiter"


def _as2d(a, d, name):
    if a is None:
        return np.zeros((0, d))
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[1] != d:
        raise ShapeError(f"{name} must have shape (*, {d}), got {a.shape}")
    return a


def _as1d(a, rows, name):
    if a is None:
        a = np.zeros(0)
    a = np.asarray(a, dtype=float)
    if a.shape != (rows,):
        raise ShapeError(f"{name} must have shape ({rows},), got {a.shape}")
    return a


@dataclass(frozen=True)
class QpProblem:
    """min 0.5 x'Hx + g'x  s.t.  eq_lhs x = eq_rhs, ineq_lhs x <= ineq_rhs."""

    hessian: np.ndarray | None
    linear: np.ndarray
    eq_lhs: np.ndarray | None = None
    eq_rhs: np.ndarray | None = None
    ineq_lhs: np.ndarray | None = None
    ineq_rhs: np.ndarray | None = None

    def __post_init__(self):
        g = np.asarray(self.linear, dtype=float)
        if g.ndim != 1:
            raise ShapeError("linear term must be a vector")
        d = g.shape[0]
        h = self.hessian
        if h is None:
            h = np.zeros((d, d))
        h = np.asarray(h, dtype=float)
        if h.shape != (d, d):
            raise ShapeError(f"hessian must be ({d}, {d}), got {h.shape}")
        if h.size and np.max(np.abs(h - h.T)) > 1e-12:
            raise ValueError("hessian must be symmetric (tolerance 1e-12)")
        eq = _as2d(self.eq_lhs, d, "eq_lhs")
        beq = _as1d(self.eq_rhs, eq.shape[0], "eq_rhs")
        ineq = _as2d(self.ineq_lhs, d, "ineq_lhs")
        bineq = _as1d(self.ineq_rhs, ineq.shape[0], "ineq_rhs")
        for name, arr in (("hessian", h), ("linear", g), ("eq_lhs", eq),
                          ("eq_rhs", beq), ("ineq_lhs", ineq), ("ineq_rhs", bineq)):
            if arr.size and not np.all(np.isfinite(arr)):
                raise ValueError(f"{name} contains non-finite entries")
        object.__setattr__(self, "hessian", h)
        object.__setattr__(self, "linear", g)
        object.__setattr__(self, "eq_lhs", eq)
        object.__setattr__(self, "eq_rhs", beq)
        object.__setattr__(self, "ineq_lhs", ineq)
        object.__setattr__(self, "ineq_rhs", bineq)

    @property
    def dim(self) -> int:
        return self.linear.shape[0]

    @property
    def n_eq(self) -> int:
        return self.eq_lhs.shape[0]

    @property
    def n_ineq(self) -> int:
        return self.ineq_lhs.shape[0]

    def objective_at(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.hessian @ x + self.linear @ x)


@dataclass
class QpSolution:
    status: QpStatus
    x: np.ndarray | None
    objective: float
    iterations: int
    metadata: dict = field(default_factory=dict)


def find_feasible_point(problem: QpProblem):
    """Phase-1 LP: minimize the largest constraint violation.

    Returns (feasible, x0, gap).  gap is the smallest achievable maximum
    violation; feasible means gap <= FEAS_TOL.  x0 is None when the LP
    itself could not be solved (inconsistent equalities included).
    """
    d = problem.dim
    q = problem.n_ineq
    if q == 0 and problem.n_eq == 0:
        return True, np.zeros(d), 0.0
    # variables (x, t): min t with  ineq x - t <= b,  t >= 0,  eq x = beq
    cost = np.zeros(d + 1)
    cost[d] = 1.0
    a_ub = None
    b_ub = None
    if q:
        a_ub = np.hstack([problem.ineq_lhs, -np.ones((q, 1))])
        b_ub = problem.ineq_rhs
    a_eq = None
    b_eq = None
    if problem.n_eq:
        a_eq = np.hstack([problem.eq_lhs, np.zeros((problem.n_eq, 1))])
        b_eq = problem.eq_rhs
    bounds = [(None, None)] * d + [(0.0, None)]
    res = linprog(cost, A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                  bounds=bounds, method="highs")
    if res.status == 2:
        return False, None, float("inf")
    if res.status != 0:
        return False, None, float("nan")
    gap = float(res.fun)
    return gap <= FEAS_TOL, res.x[:d], gap


def _kkt_solve(h, a_act, rhs_top, rhs_bot):
    """Solve the saddle system [[H, A'], [A, 0]] [u; lam] = [rhs_top; rhs_bot]."""
    na = a_act.shape[0]
    d = h.shape[0]
    kkt = np.zeros((d + na, d + na))
    kkt[:d, :d] = h
    if na:
        kkt[:d, d:] = a_act.T
        kkt[d:, :d] = a_act
    rhs = np.concatenate([rhs_top, rhs_bot])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        sol, *_ = np.linalg.lstsq(kkt, rhs, rcond=None)
    return sol[:d], sol[d:]


def solve_qp(problem: QpProblem, maxiter: int | None = None) -> QpSolution:
    """Solve a convex QP; falls back to the LP path for a zero Hessian."""
    h0 = problem.hessian
    if not np.any(h0):
        return solve_lp(problem, maxiter)

    d = problem.dim
    q = problem.n_ineq
    if maxiter is None:
        maxiter = 10 * (d + q)

    regularized = False
    h = h0
    try:
        np.linalg.cholesky(h0)
    except np.linalg.LinAlgError:
        h = h0 + REG_EPS * np.eye(d)
        regularized = True
        try:
            np.linalg.cholesky(h)
        except np.linalg.LinAlgError:
            raise ValueError("hessian is not positive semidefinite") from None

    feasible, x, gap = find_feasible_point(problem)
    if x is None:
        return QpSolution(QpStatus.INFEASIBLE, None, float("nan"), 0,
                          {"phase1_gap": gap, "regularized": regularized})
    if not feasible:
        return QpSolution(QpStatus.INFEASIBLE, None, float("nan"), 0,
                          {"phase1_gap": gap, "regularized": regularized})

    g = problem.linear
    a_eq = problem.eq_lhs
    b_eq = problem.eq_rhs
    a_in = problem.ineq_lhs
    b_in = problem.ineq_rhs
    n_eq = problem.n_eq

    working: list[int] = []
    lam_in = np.zeros(0)
    iterations = 0
    while iterations < maxiter:
        iterations += 1
        rows = [a_eq] + ([a_in[working]] if working else [])
        a_act = np.vstack(rows) if (n_eq or working) else np.zeros((0, d))
        r_act = np.concatenate(
            [b_eq - a_eq @ x] + ([b_in[working] - a_in[working] @ x] if working else [])
        ) if (n_eq or working) else np.zeros(0)
        p, lam = _kkt_solve(h, a_act, -(h @ x + g), r_act)
        lam_in = lam[n_eq:]
        if np.max(np.abs(p), initial=0.0) <= 1e-10 * (1.0 + np.max(np.abs(x), initial=0.0)):
            # stationary on the working set; check inequality multipliers
            if lam_in.size == 0 or np.min(lam_in) >= -MULT_TOL:
                break
            # drop the lowest-index working constraint with a negative multiplier
            bad = [wi for wi, lv in zip(working, lam_in) if lv < -MULT_TOL]
            working.remove(min(bad))
            continue
        # step length limited by inactive inequality rows
        alpha = 1.0
        block = -1
        if q:
            mask = np.ones(q, dtype=bool)
            mask[working] = False
            idx = np.nonzero(mask)[0]
            if idx.size:
                denom = a_in[idx] @ p
                resid = b_in[idx] - a_in[idx] @ x
                hits = denom > 1e-13 * (1.0 + np.abs(a_in[idx] @ x))
                if np.any(hits):
                    ratios = np.full(idx.size, np.inf)
                    ratios[hits] = np.maximum(resid[hits], 0.0) / denom[hits]
                    amin = ratios.min()
                    if amin < alpha:
                        alpha = amin
                        ties = idx[ratios <= amin + 1e-12 * (1.0 + amin)]
                        block = int(ties.min())
        x = x + alpha * p
        if block >= 0:
            working.append(block)
            working.sort()
    else:
        return QpSolution(QpStatus.MAXITER, x, problem.objective_at(x), iterations,
                          {"regularized": regularized,
                           "message": "iteration cap reached"})

    lam_full = np.zeros(q)
    if working:
        lam_full[working] = np.maximum(lam_in, 0.0)
    lam_eq = lam[:n_eq]
    polished = False
    if regularized:
        xp, lamp = _polish(problem, working)
        if xp is not None:
            x = xp
            lam_eq = lamp[:n_eq]
            lam_full = np.zeros(q)
            if working:
                lam_full[working] = lamp[n_eq:]
            polished = True

    if np.max(np.abs(x), initial=0.0) > 1e9:
        return QpSolution(QpStatus.UNBOUNDED, None, float("-inf"), iterations,
                          {"regularized": regularized,
                           "message": "flat objective direction drifted"})

    feas = _feas_residual(problem, x)
    h_eff = h0 if (polished or not regularized) else h
    stat = h_eff @ x + g + problem.eq_lhs.T @ lam_eq + a_in.T @ lam_full
    stat_res = float(np.max(np.abs(stat), initial=0.0))
    gap_c = float(abs(lam_full @ (a_in @ x - b_in))) if q else 0.0
    meta = {
        "regularized": regularized,
        "polished": polished,
        "feas_residual": feas,
        "stat_residual": stat_res,
        "duality_gap": gap_c,
        "active_set": tuple(working),
    }
    status = QpStatus.OPTIMAL
    if feas > FEAS_TOL or stat_res > max(STAT_TOL, STAT_TOL * np.max(np.abs(g), initial=1.0)):
        status = QpStatus.MAXITER
        meta["message"] = "residual tolerance not met"
    return QpSolution(status, x, problem.objective_at(x), iterations, meta)


def _polish(problem: QpProblem, working: list[int]):
    """Re-solve on the final active set with the unregularized Hessian."""
    d = problem.dim
    n_eq = problem.n_eq
    rows = [problem.eq_lhs] + ([problem.ineq_lhs[working]] if working else [])
    a_act = np.vstack(rows) if (n_eq or working) else np.zeros((0, d))
    b_act = np.concatenate(
        [problem.eq_rhs] + ([problem.ineq_rhs[working]] if working else [])
    ) if (n_eq or working) else np.zeros(0)
    na = a_act.shape[0]
    kkt = np.zeros((d + na, d + na))
    kkt[:d, :d] = problem.hessian
    if na:
        kkt[:d, d:] = a_act.T
        kkt[d:, :d] = a_act
    rhs = np.concatenate([-problem.linear, b_act])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError:
        return None, None
    if not np.all(np.isfinite(sol)):
        return None, None
    resid = kkt @ sol - rhs
    if np.max(np.abs(resid), initial=0.0) > 1e-6:
        return None, None
    x = sol[:d]
    lam = sol[d:]
    if _feas_residual(problem, x) > FEAS_TOL:
        return None, None
    if lam[n_eq:].size and np.min(lam[n_eq:]) < -1e-7:
        return None, None
    return x, lam


def _feas_residual(problem: QpProblem, x) -> float:
    worst = 0.0
    if problem.n_eq:
        worst = float(np.max(np.abs(problem.eq_lhs @ x - problem.eq_rhs)))
    if problem.n_ineq:
        worst = max(worst, float(np.max(problem.ineq_lhs @ x - problem.ineq_rhs, initial=0.0)))
    return worst


def solve_lp(problem: QpProblem, maxiter: int | None = None) -> QpSolution:
    """Solve the LP case (zero Hessian) through HiGHS."""
    if np.any(problem.hessian):
        raise ValueError("solve_lp requires a zero hessian")
    q = problem.n_ineq
    options = {}
    if maxiter is not None:
        options["maxiter"] = maxiter
    res = linprog(
        problem.linear,
        A_ub=problem.ineq_lhs if q else None,
        b_ub=problem.ineq_rhs if q else None,
        A_eq=problem.eq_lhs if problem.n_eq else None,
        b_eq=problem.eq_rhs if problem.n_eq else None,
        bounds=[(None, None)] * problem.dim,
        method="highs",
        options=options or None,
    )
    if res.status == 2:
        return QpSolution(QpStatus.INFEASIBLE, None, float("nan"), _lp_iters(res),
                          {"message": res.message})
    if res.status == 3:
        return QpSolution(QpStatus.UNBOUNDED, None, float("-inf"), _lp_iters(res),
                          {"message": res.message})
    if res.status != 0:
        return QpSolution(QpStatus.MAXITER, res.x, float("nan"), _lp_iters(res),
                          {"message": res.message})
    x = np.asarray(res.x, dtype=float)
    lam_in = -np.asarray(res.ineqlin.marginals, dtype=float) if q else np.zeros(0)
    lam_eq = -np.asarray(res.eqlin.marginals, dtype=float) if problem.n_eq else np.zeros(0)
    stat = problem.linear.copy()
    if q:
        stat = stat + problem.ineq_lhs.T @ lam_in
    if problem.n_eq:
        stat = stat + problem.eq_lhs.T @ lam_eq
    feas = _feas_residual(problem, x)
    meta = {
        "feas_residual": feas,
        "stat_residual": float(np.max(np.abs(stat), initial=0.0)),
        "duality_gap": float(abs(lam_in @ (problem.ineq_lhs @ x - problem.ineq_rhs))) if q else 0.0,
    }
    return QpSolution(QpStatus.OPTIMAL, x, float(res.fun), _lp_iters(res), meta)


def _lp_iters(res) -> int:
    n = getattr(res, "nit", 0)
    return int(n if np.isscalar(n) else np.sum(n))
