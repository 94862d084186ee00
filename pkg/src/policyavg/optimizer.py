"""Shared numerical-optimization kernel.

A dense two-phase simplex (with Bland's anti-cycling rule), exact and
subgradient pinball-loss linear estimation, Nelder-Mead, and k-means.  LP
scale here is small (a dozen structural weights, at most a few hundred data
rows), so a dense tableau is adequate and exactly reproducible; exactness
matters because downstream dominance invariants are tested as hard
inequalities.

All solvers are pure given their inputs and seeds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .special_math import Tolerance

__all__ = [
    "LinearProgram",
    "LpSolution",
    "solve_lp",
    "fit_pinball_linear",
    "NelderMeadResult",
    "nelder_mead",
    "kmeans",
]

_PIV_TOL = 1e-9
_FEAS_TOL = 1e-8


@dataclass(frozen=True)
class LinearProgram:
    """min c.x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  bounds on x.

    ``bounds`` is one (lo, hi) pair per variable with +-inf allowed; the
    default is (0, +inf) for every variable.
    """

    c: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    bounds: tuple | None = None

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        if c.ndim != 1 or c.size == 0:
            raise ValueError("objective must be a nonempty vector")
        n = c.size
        object.__setattr__(self, "c", c)
        for name in ("a_eq", "a_ub"):
            a = getattr(self, name)
            b = getattr(self, "b" + name[1:])
            if (a is None) != (b is None):
                raise ValueError(f"{name} and its rhs must be given together")
            if a is not None:
                a = np.atleast_2d(np.asarray(a, dtype=float))
                b = np.atleast_1d(np.asarray(b, dtype=float))
                if a.shape != (b.size, n):
                    raise ValueError(f"{name} shape inconsistent with objective/rhs")
                object.__setattr__(self, name, a)
                object.__setattr__(self, "b" + name[1:], b)
        if self.bounds is not None:
            bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
            if len(bounds) != n:
                raise ValueError("one (lo, hi) pair per variable")
            for lo, hi in bounds:
                if lo > hi:
                    raise ValueError("lower bound exceeds upper bound")
            object.__setattr__(self, "bounds", bounds)

    @property
    def n(self) -> int:
        return self.c.size


@dataclass(frozen=True)
class LpSolution:
    x: np.ndarray | None
    objective_value: float
    status: str  # "optimal" | "infeasible" | "unbounded"
    iterations: int = 0


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    colvals = T[:, col].copy()
    colvals[row] = 0.0
    T -= colvals[:, None] * T[row][None, :]


def _simplex(T: np.ndarray, basis: np.ndarray, allowed: np.ndarray) -> tuple[str, int]:
    """Run the pivot loop on tableau T (objective in the last row).

    Pricing is Dantzig's rule, switching to Bland's rule after a streak of
    degenerate pivots and back once the objective improves, which guarantees
    termination while keeping typical pivot counts low.  The leaving-row tie
    break (smallest basis index) is Bland-compatible and deterministic.
    """
    n_rows = T.shape[0] - 1
    obj_prev = T[-1, -1]
    degenerate_streak = 0
    use_bland = False
    iterations = 0
    max_iterations = 20000 + 40 * T.size // max(1, T.shape[0])
    while True:
        reduced = T[-1, :-1]
        if use_bland:
            candidates = np.flatnonzero(allowed & (reduced < -_PIV_TOL))
            if candidates.size == 0:
                return "optimal", iterations
            col = int(candidates[0])
        else:
            masked = np.where(allowed, reduced, 0.0)
            col = int(np.argmin(masked))
            if masked[col] >= -_PIV_TOL:
                return "optimal", iterations
        colvals = T[:n_rows, col]
        positive = colvals > _PIV_TOL
        if not positive.any():
            return "unbounded", iterations
        ratios = np.full(n_rows, np.inf)
        ratios[positive] = T[:n_rows, -1][positive] / colvals[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + 1e-12 + 1e-10 * abs(best))
        row = int(ties[np.argmin(basis[ties])])
        _pivot(T, row, col)
        basis[row] = col
        iterations += 1
        obj_now = T[-1, -1]  # holds minus the objective: progress raises it
        if obj_now <= obj_prev + 1e-12:
            degenerate_streak += 1
            if degenerate_streak > 40:
                use_bland = True
        else:
            degenerate_streak = 0
            use_bland = False
        obj_prev = obj_now
        if iterations > max_iterations:
            raise RuntimeError("simplex exceeded its iteration safety cap")


def _standardize(lp: LinearProgram):
    """Rewrite the LP over nonnegative variables with equality rows + slacks."""
    n = lp.n
    bounds = lp.bounds if lp.bounds is not None else tuple((0.0, math.inf) for _ in range(n))
    # variable transforms: x_orig = offset + sign * y  (or a split pair)
    cols = []        # list of (orig_index, sign) per standard column
    offsets = np.zeros(n)
    extra_ub = []    # (std_col, cap) rows for two-sided bounds
    for j, (lo, hi) in enumerate(bounds):
        if math.isfinite(lo):
            offsets[j] = lo
            cols.append((j, 1.0))
            if math.isfinite(hi):
                extra_ub.append((len(cols) - 1, hi - lo))
        elif math.isfinite(hi):
            offsets[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    n_std = len(cols)

    def transform(a: np.ndarray) -> np.ndarray:
        out = np.empty((a.shape[0], n_std))
        for k, (j, sign) in enumerate(cols):
            out[:, k] = sign * a[:, j]
        return out

    a_eq_rows, b_eq_rows = [], []
    if lp.a_eq is not None:
        a_eq_rows.append(transform(lp.a_eq))
        b_eq_rows.append(lp.b_eq - lp.a_eq @ offsets)
    a_ub_rows, b_ub_rows = [], []
    if lp.a_ub is not None:
        a_ub_rows.append(transform(lp.a_ub))
        b_ub_rows.append(lp.b_ub - lp.a_ub @ offsets)
    if extra_ub:
        rows = np.zeros((len(extra_ub), n_std))
        caps = np.empty(len(extra_ub))
        for i, (k, cap) in enumerate(extra_ub):
            rows[i, k] = 1.0
            caps[i] = cap
        a_ub_rows.append(rows)
        b_ub_rows.append(caps)

    a_eq = np.vstack(a_eq_rows) if a_eq_rows else np.empty((0, n_std))
    b_eq = np.concatenate(b_eq_rows) if b_eq_rows else np.empty(0)
    a_ub = np.vstack(a_ub_rows) if a_ub_rows else np.empty((0, n_std))
    b_ub = np.concatenate(b_ub_rows) if b_ub_rows else np.empty(0)

    m_eq, m_ub = a_eq.shape[0], a_ub.shape[0]
    m = m_eq + m_ub
    a_full = np.zeros((m, n_std + m_ub))
    a_full[:m_eq, :n_std] = a_eq
    a_full[m_eq:, :n_std] = a_ub
    a_full[m_eq:, n_std:] = np.eye(m_ub)
    b_full = np.concatenate([b_eq, b_ub])

    c_std = np.zeros(n_std + m_ub)
    for k, (j, sign) in enumerate(cols):
        c_std[k] = sign * lp.c[j]
    obj_offset = float(lp.c @ offsets)
    return a_full, b_full, c_std, cols, offsets, n_std, obj_offset


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Two-phase dense simplex.

    Phase 1 starts from a crash basis (existing exact unit columns; artificial
    variables only on uncovered rows) and is skipped entirely when the crash
    basis covers every row.  Optimal solutions satisfy primal feasibility to
    1e-8 and are vertex solutions; the pivot rule is deterministic, so ties
    among alternate optima always resolve the same way.
    """
    a, b, c_std, cols, offsets, n_std, obj_offset = _standardize(lp)
    m, n_total = a.shape
    if m == 0:
        # only bounds: minimize over the box directly
        x = np.array([lo if ci >= 0 else hi for ci, (lo, hi) in
                      zip(lp.c, lp.bounds or [(0.0, math.inf)] * lp.n)])
        if not np.all(np.isfinite(x[np.asarray(lp.c) != 0])):
            return LpSolution(None, math.nan, "unbounded")
        x = np.where(np.isfinite(x), x, 0.0)
        return LpSolution(x, float(lp.c @ x), "optimal")

    flip = b < 0
    a[flip] *= -1.0
    b[flip] *= -1.0

    # crash basis: adopt exact unit columns
    basis = np.full(m, -1, dtype=int)
    col_nonzeros = (a != 0.0).sum(axis=0)
    for j in range(n_total):
        if col_nonzeros[j] != 1:
            continue
        i = int(np.flatnonzero(a[:, j])[0])
        if basis[i] == -1 and a[i, j] == 1.0:
            basis[i] = j
    uncovered = np.flatnonzero(basis == -1)
    n_art = uncovered.size
    total_iters = 0

    if n_art:
        art = np.zeros((m, n_art))
        for k, i in enumerate(uncovered):
            art[i, k] = 1.0
            basis[i] = n_total + k
        T = np.zeros((m + 1, n_total + n_art + 1))
        T[:m, :n_total] = a
        T[:m, n_total:-1] = art
        T[:m, -1] = b
        T[-1, n_total:-1] = 1.0
        for i in range(m):
            if basis[i] >= n_total:
                T[-1] -= T[i]
        allowed = np.ones(n_total + n_art, dtype=bool)
        allowed[n_total:] = False  # artificials never re-enter
        status, iters = _simplex(T, basis, allowed)
        total_iters += iters
        if -T[-1, -1] > _FEAS_TOL:
            return LpSolution(None, math.nan, "infeasible", total_iters)
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if basis[i] >= n_total:
                row = T[i, :n_total]
                pivots = np.flatnonzero(np.abs(row) > _PIV_TOL)
                if pivots.size:
                    _pivot(T, i, int(pivots[0]))
                    basis[i] = int(pivots[0])
                else:
                    keep[i] = False
        if not keep.all():
            T = np.vstack([T[:m][keep], T[-1][None, :]])
            basis = basis[keep]
            m = int(keep.sum())
        T = np.hstack([T[:, :n_total], T[:, -1:]])
    else:
        T = np.zeros((m + 1, n_total + 1))
        T[:m, :n_total] = a
        T[:m, -1] = b

    # phase 2: install the true objective and price out the basis
    T[-1, :] = 0.0
    T[-1, :n_total] = c_std
    for i in range(m):
        cb = T[-1, basis[i]]
        if cb != 0.0:
            T[-1] -= cb * T[i]
    allowed = np.ones(n_total, dtype=bool)
    status, iters = _simplex(T, basis, allowed)
    total_iters += iters
    if status == "unbounded":
        return LpSolution(None, math.nan, "unbounded", total_iters)

    x_std = np.zeros(n_total)
    x_std[basis] = T[:m, -1]
    x = offsets.copy()
    for k, (j, sign) in enumerate(cols):
        x[j] += sign * x_std[k]

    # feasibility audit: an optimal status must never hide a violated row
    if lp.a_eq is not None and np.max(np.abs(lp.a_eq @ x - lp.b_eq), initial=0.0) > _FEAS_TOL:
        raise RuntimeError("simplex returned an equality-infeasible vertex")
    if lp.a_ub is not None and np.max(lp.a_ub @ x - lp.b_ub, initial=0.0) > _FEAS_TOL:
        raise RuntimeError("simplex returned an inequality-infeasible vertex")
    if lp.bounds is not None:
        for xj, (lo, hi) in zip(x, lp.bounds):
            if xj < lo - _FEAS_TOL or xj > hi + _FEAS_TOL:
                raise RuntimeError("simplex returned an out-of-bounds vertex")
    return LpSolution(x, float(lp.c @ x), "optimal", total_iters)


def fit_pinball_linear(features, demands, ratio: float, reg=None) -> np.ndarray:
    """Minimize mean pinball (newsvendor) loss of a linear order rule.

    ``reg`` is None, ("l1", lam) or ("l2", lam).  With None or l1 the problem
    is solved exactly as an LP over coefficient splits and overage/underage
    auxiliaries; a deterministic epsilon-scaled L1 term (1e-9 relative) breaks
    ties among alternate optima toward the smallest-magnitude coefficient
    vector, so e.g. an intercept-only fit returns the smallest minimizing
    quantile.  With l2 the penalized objective is minimized by projected
    subgradient (step a0/sqrt(s), a0 = 1 / max column norm, 5000 iterations,
    averaged iterate), warm-started at the exact unpenalized LP solution.
    Cost units are normalized to c_o = 1 - ratio, c_u = ratio.
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    d = np.asarray(demands, dtype=float)
    t, p = X.shape
    if d.shape != (t,):
        raise ValueError("features and demands must have matching row counts")
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must lie strictly between 0 and 1")
    co, cu = 1.0 - ratio, ratio
    if reg is not None:
        kind, lam = reg
        if kind not in ("l1", "l2"):
            raise ValueError("reg must be None, ('l1', lam) or ('l2', lam)")
        if lam < 0:
            raise ValueError("penalty weight must be nonnegative")
    else:
        kind, lam = None, 0.0

    if kind == "l2":
        q = fit_pinball_linear(X, d, ratio, None)
        col_norms = np.linalg.norm(X, axis=0)
        a0 = 1.0 / max(col_norms.max(), 1e-12)
        # step cap keeps the quadratic-penalty recursion contractive when lam
        # is large; inactive for the usual small-lam grid
        step_cap = 0.45 / lam if lam > 0 else math.inf
        q_bar = np.zeros(p)
        for s in range(1, 5001):
            resid = X @ q - d
            over = resid > 0.0  # ties treated as underage (one-sided derivative)
            grad = (co * X[over].sum(axis=0) - cu * X[~over].sum(axis=0)) / t
            grad += 2.0 * lam * q
            q = q - min(a0 / math.sqrt(s), step_cap) * grad
            q_bar += q
        return q_bar / 5000.0

    # exact LP: variables [q+ (p), q- (p), u (t), v (t)]
    penalty = lam if kind == "l1" else 0.0
    tie_eps = 1e-9 * max(co, cu)
    n_var = 2 * p + 2 * t
    c = np.concatenate([
        np.full(p, penalty + tie_eps),
        np.full(p, penalty + tie_eps),
        np.full(t, co / t),
        np.full(t, cu / t),
    ])
    a_ub = np.zeros((2 * t, n_var))
    a_ub[:t, :p] = X
    a_ub[:t, p:2 * p] = -X
    a_ub[:t, 2 * p:2 * p + t] = -np.eye(t)
    a_ub[t:, :p] = -X
    a_ub[t:, p:2 * p] = X
    a_ub[t:, 2 * p + t:] = -np.eye(t)
    b_ub = np.concatenate([d, -d])
    sol = solve_lp(LinearProgram(c, a_ub=a_ub, b_ub=b_ub))
    if sol.status != "optimal":
        raise RuntimeError(f"pinball LP ended with status {sol.status}")
    return sol.x[:p] - sol.x[p:2 * p]


@dataclass(frozen=True)
class NelderMeadResult:
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int


def nelder_mead(f, x0, tol: Tolerance = Tolerance(abs_tol=1e-8, max_iter=500)) -> NelderMeadResult:
    """Derivative-free simplex minimization (reflection/expansion/contraction/shrink).

    Terminates when the simplex diameter drops below tol.abs_tol or after
    tol.max_iter iterations; always returns the best point seen, with a
    convergence flag.
    """
    x0 = np.asarray(x0, dtype=float)
    n = x0.size
    f0 = float(f(x0))
    if not math.isfinite(f0):
        raise ValueError("objective must be finite at the starting point")
    simplex = [x0]
    for i in range(n):
        step = 0.05 * abs(x0[i]) if x0[i] != 0.0 else 0.00025
        point = x0.copy()
        point[i] += step
        simplex.append(point)
    values = [f0] + [float(f(pt)) for pt in simplex[1:]]

    alpha, gamma, rho, sigma = 1.0, 2.0, 0.5, 0.5
    iterations = 0
    converged = False
    while iterations < tol.max_iter:
        order = sorted(range(n + 1), key=lambda i: values[i])
        simplex = [simplex[i] for i in order]
        values = [values[i] for i in order]
        diameter = max(float(np.max(np.abs(pt - simplex[0]))) for pt in simplex[1:])
        if diameter < tol.abs_tol:
            converged = True
            break
        centroid = np.mean(simplex[:-1], axis=0)
        worst = simplex[-1]
        reflected = centroid + alpha * (centroid - worst)
        f_ref = float(f(reflected))
        if values[0] <= f_ref < values[-2]:
            simplex[-1], values[-1] = reflected, f_ref
        elif f_ref < values[0]:
            expanded = centroid + gamma * (reflected - centroid)
            f_exp = float(f(expanded))
            if f_exp < f_ref:
                simplex[-1], values[-1] = expanded, f_exp
            else:
                simplex[-1], values[-1] = reflected, f_ref
        else:
            contracted = centroid + rho * (worst - centroid)
            f_con = float(f(contracted))
            if f_con < values[-1]:
                simplex[-1], values[-1] = contracted, f_con
            else:
                for i in range(1, n + 1):
                    simplex[i] = simplex[0] + sigma * (simplex[i] - simplex[0])
                    values[i] = float(f(simplex[i]))
        iterations += 1

    best = int(np.argmin(values))
    return NelderMeadResult(simplex[best], values[best], converged, iterations)


def kmeans(points, k: int, seed) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm with seeded farthest-point initialization.

    Returns (assignments, centroids).  Runs until the assignment fixpoint or
    100 iterations; empty clusters are reseeded to the point farthest from
    its centroid.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    n = pts.shape[0]
    if k < 1:
        raise ValueError("k must be a positive integer")
    if n < k:
        raise ValueError("need at least k points")
    rng = np.random.default_rng(seed)
    centroids = [pts[int(rng.integers(n))]]
    dist2 = np.sum((pts - centroids[0]) ** 2, axis=1)
    for _ in range(1, k):
        centroids.append(pts[int(np.argmax(dist2))])
        dist2 = np.minimum(dist2, np.sum((pts - centroids[-1]) ** 2, axis=1))
    centroids = np.array(centroids)

    assignments = np.full(n, -1, dtype=int)
    for _ in range(100):
        d2 = ((pts[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)
        if np.array_equal(new_assign, assignments):
            break
        assignments = new_assign
        for c in range(k):
            members = pts[assignments == c]
            if members.size:
                centroids[c] = members.mean(axis=0)
            else:
                spread = d2[np.arange(n), assignments]
                centroids[c] = pts[int(np.argmax(spread))]
    return assignments, centroids
