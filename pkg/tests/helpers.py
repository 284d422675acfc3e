"""Shared test utilities: random problem generators and independent oracles.

The oracles here are deliberately written from scratch, structured
differently from the library code, so that agreement between the two is
meaningful evidence rather than a tautology.
"""

import itertools

import numpy as np

import impc


def spectral_radius(a) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def random_stable_system(rng, n, m, rho_target=0.8):
    """Random (A, B) with the spectral radius of A scaled below one."""
    a = rng.normal(size=(n, n))
    rho = spectral_radius(a)
    if rho > 1e-9:
        a = a * (rho_target * rng.uniform(0.5, 1.0) / rho)
    b = rng.normal(size=(n, m))
    return a, b


def simulate_plant(rng, a, b, w_bar, t, u_radius=1.0):
    """Trajectory of x+ = Ax + Bu + w from the origin, returned as a Dataset."""
    n, m = a.shape[0], b.shape[1]
    w_bar = np.asarray(w_bar, dtype=float)
    u = rng.uniform(-u_radius, u_radius, (t, m))
    w = rng.uniform(-1.0, 1.0, (t, n)) * w_bar
    states = np.zeros((t + 1, n))
    for k in range(t):
        states[k + 1] = a @ states[k] + b @ u[k] + w[k]
    return impc.Dataset(states, u, w_bar)


def random_contractive_cl(rng, n, rho_target=0.7, series_target=0.8):
    """Closed-loop interval whose radius series is guaranteed summable."""
    a = rng.normal(size=(n, n))
    rho = spectral_radius(a)
    if rho > 1e-9:
        a = a * (rho_target * rng.uniform(0.4, 1.0) / rho)
    series = np.eye(n)
    acc = np.eye(n)
    for _ in range(2000):
        acc = a @ acc
        series += np.abs(acc)
        if np.max(np.abs(acc)) < 1e-14:
            break
    d = np.abs(rng.normal(size=(n, n)))
    gain = spectral_radius(d @ series)
    if gain > 1e-12:
        d = d * (series_target * rng.uniform(0.2, 1.0) / gain)
    return impc.ClosedLoopInterval(a, d)


def random_zonotope(rng, rows, cols, n_gens, scale=1.0):
    center = rng.normal(size=(rows, cols)) * scale
    gens = [rng.normal(size=(rows, cols)) * scale * rng.uniform(0.1, 1.0)
            for _ in range(n_gens)]
    return impc.MatrixZonotope(center, gens)


def random_interval(rng, rows, cols, scale=1.0, radius_scale=0.5):
    center = rng.normal(size=(rows, cols)) * scale
    radius = np.abs(rng.normal(size=(rows, cols))) * radius_scale
    return impc.IntervalMatrix(center, radius)


def zonotope_member_batch(z, rng, count):
    """count random members of a matrix zonotope, shape (count, rows, cols)."""
    if z.n_generators == 0:
        return np.broadcast_to(z.center, (count,) + z.shape).copy()
    gens = np.stack(z.generators)
    betas = rng.uniform(-1.0, 1.0, (count, z.n_generators))
    return z.center[None] + np.einsum("sg,gij->sij", betas, gens)


def transport_witness_violations(imat, zon, rng, count, steps=1, tol=1e-12):
    """Count sampled iterated products that escape the transport enclosure.

    Containment of A_s @ X in the transported zonotope is certified
    stepwise: the linear part keeps the member's own coefficients, and
    the radius part D @ X must stay within the bound matrix F computed
    exactly as the operator does.  Returns (violations, checked).
    """
    x = zonotope_member_batch(zon, rng, count)
    z = zon
    bad = 0
    for _ in range(steps):
        mag = np.abs(z.center)
        for g in z.generators:
            mag = mag + np.abs(g)
        f = imat.radius @ mag
        d = rng.uniform(-1.0, 1.0, (count,) + imat.shape) * imat.radius
        dx = np.einsum("sij,sjk->sik", d, x)
        bad += int(np.sum(np.any(np.abs(dx) > f[None] + tol, axis=(1, 2))))
        x = np.einsum("ij,sjk->sik", imat.center, x) + dx
        z = impc.transport(imat, z)
    return bad, count


def brute_lp_min(c, a_ub, b_ub, a_eq=None, b_eq=None, tol=1e-9):
    """LP minimum by enumerating basic feasible points (bounded LPs only)."""
    c = np.asarray(c, dtype=float)
    a_ub = np.asarray(a_ub, dtype=float)
    b_ub = np.asarray(b_ub, dtype=float)
    d = c.shape[0]
    n_eq = 0 if a_eq is None else np.asarray(a_eq).shape[0]
    best = np.inf
    for subset in itertools.combinations(range(a_ub.shape[0]), d - n_eq):
        rows = [a_ub[list(subset)]]
        rhs = [b_ub[list(subset)]]
        if n_eq:
            rows.append(np.asarray(a_eq, dtype=float))
            rhs.append(np.asarray(b_eq, dtype=float))
        mat = np.vstack(rows)
        vec = np.concatenate(rhs)
        try:
            x = np.linalg.solve(mat, vec)
        except np.linalg.LinAlgError:
            continue
        if not np.all(np.isfinite(x)):
            continue
        if np.any(a_ub @ x > b_ub + tol):
            continue
        if n_eq and np.max(np.abs(np.asarray(a_eq) @ x - np.asarray(b_eq))) > tol:
            continue
        best = min(best, float(c @ x))
    return best


class NominalVariableHorizonMpc:
    """Reference controller for the disturbance-free, exactly-known case.

    Independent assembly: plain (z, v) decision vector, no auxiliary
    magnitude variables, no tightening machinery.  Shares only the QP
    solver with the library.
    """

    def __init__(self, a, b, k_gain, gamma, n_max, state_set, input_set,
                 terminal_set, cost_weight):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self.k = np.asarray(k_gain, dtype=float)
        self.gamma = float(gamma)
        self.n_max = int(n_max)
        self.x_set = state_set
        self.u_set = input_set
        self.f_set = terminal_set
        self.w = np.asarray(cost_weight, dtype=float)
        self.n = self.a.shape[0]
        self.m = self.b.shape[1]

    def _qp(self, x, horizon):
        ns, m = self.n, self.m
        dim = ns * (horizon + 1) + m * horizon

        def zs(j):
            return slice(ns * j, ns * (j + 1))

        def vs(j):
            return slice(ns * (horizon + 1) + m * j,
                         ns * (horizon + 1) + m * (j + 1))

        eq = np.zeros((ns * (horizon + 1), dim))
        eq_rhs = np.zeros(ns * (horizon + 1))
        eq[:ns, zs(0)] = np.eye(ns)
        eq_rhs[:ns] = x
        for j in range(horizon):
            r = slice(ns * (j + 1), ns * (j + 2))
            eq[r, zs(j + 1)] = np.eye(ns)
            eq[r, zs(j)] = -self.a
            eq[r, vs(j)] = -self.b
        blocks = []
        rhs = []
        for j in range(horizon + 1):
            row = np.zeros((self.x_set.h.shape[0], dim))
            row[:, zs(j)] = self.x_set.h
            blocks.append(row)
            rhs.append(self.x_set.b)
        for j in range(horizon):
            row = np.zeros((self.u_set.h.shape[0], dim))
            row[:, vs(j)] = self.u_set.h
            blocks.append(row)
            rhs.append(self.u_set.b)
        row = np.zeros((self.f_set.h.shape[0], dim))
        row[:, zs(horizon)] = self.f_set.h
        blocks.append(row)
        rhs.append(self.f_set.b)
        # cost sum_j |v(j) - K z(j)|^2_W via the stacked selector matrix
        sel = np.zeros((m * horizon, dim))
        for j in range(horizon):
            sel[m * j:m * (j + 1), zs(j)] = -self.k
            sel[m * j:m * (j + 1), vs(j)] = np.eye(m)
        wbig = np.kron(np.eye(horizon), self.w)
        hess = 2.0 * sel.T @ wbig @ sel
        return impc.QpProblem(hess, np.zeros(dim), eq, eq_rhs,
                              np.vstack(blocks), np.concatenate(rhs)), zs, vs

    def solve(self, x):
        """Returns (horizon, total cost, z trajectory, v trajectory)."""
        best = None
        for horizon in range(1, self.n_max + 1):
            problem, zs, vs = self._qp(x, horizon)
            sol = impc.solve_qp(problem)
            if sol.status is not impc.QpStatus.OPTIMAL:
                continue
            total = self.gamma * horizon + max(sol.objective, 0.0)
            if best is None or total < best[1]:
                z = np.vstack([sol.x[zs(j)] for j in range(horizon + 1)])
                v = np.vstack([sol.x[vs(j)] for j in range(horizon)])
                best = (horizon, total, z, v)
        if best is None:
            raise impc.AllInfeasible()
        return best

    def feasible(self, x) -> bool:
        for horizon in range(1, self.n_max + 1):
            problem, _, _ = self._qp(x, horizon)
            ok, _, _ = impc.find_feasible_point(problem)
            if ok:
                return True
        return False

    def step(self, x):
        horizon, total, z, v = self.solve(x)
        return v[0].copy(), total, horizon
