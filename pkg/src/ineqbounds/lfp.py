"""Linear-fractional programming: dense simplex, Charnes-Cooper, dyadic Dinkelbach.

The simplex is a two-phase dense tableau method.  Problem sizes in this package
are small (sorted samples of at most a few hundred units), where a tableau is
simple and fast enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import (
    BracketViolation,
    DegenerateDenominator,
    InfeasibleConstraints,
    NumericalFailure,
    Stalled,
)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

PIVOT_TOL = 1e-11
COST_TOL = 1e-10
FEAS_TOL = 1e-9
T_MIN = 1e-12


@dataclass
class LinearProgram:
    """``optimize c @ x`` s.t. ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``lb <= x <= ub``."""

    c: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    A_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    sense: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        if not np.all(np.isfinite(self.c)):
            raise ValueError("objective coefficients must be finite")

        def rows(A, b):
            if A is None or len(A) == 0:
                return np.zeros((0, n)), np.zeros(0)
            A = np.atleast_2d(np.asarray(A, dtype=float))
            b = np.asarray(b, dtype=float).ravel()
            if A.shape[1] != n or A.shape[0] != b.size:
                raise ValueError("constraint shapes do not match the variable count")
            return A, b

        self.A_ub, self.b_ub = rows(self.A_ub, self.b_ub)
        self.A_eq, self.b_eq = rows(self.A_eq, self.b_eq)
        self.lb = np.zeros(n) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if self.lb.size != n or self.ub.size != n:
            raise ValueError("bounds do not match the variable count")
        if np.any(self.lb > self.ub):
            raise ValueError("a variable has lb > ub")
        if self.sense not in ("min", "max"):
            raise ValueError("sense must be 'min' or 'max'")

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass
class LPResult:
    status: str
    x: np.ndarray | None = None
    value: float | None = None
    # multipliers in the user's objective sense: value = dual_ub @ b_ub + dual_eq @ b_eq
    # + reduced_costs @ (active bound values)
    dual_ub: np.ndarray | None = None
    dual_eq: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Tableau over ``A x = b, x >= 0`` with ``b >= 0`` and a cost row."""

    REFACTOR_EVERY = 50

    def __init__(self, A, b, max_iter):
        m, N = A.shape
        self.T = np.zeros((m + 1, N + 1))
        self.T[:m, :N] = A
        self.T[:m, N] = b
        # original data, used to rebuild the tableau and shed rounding drift
        self.A0 = np.array(A, dtype=float)
        self.b0 = np.array(b, dtype=float)
        self.cost = np.zeros(N)
        self.basis = np.full(m, -1, dtype=np.int64)
        self.iterations = 0
        self.max_iter = max_iter

    def restrict(self, rows, ncols):
        """Keep ``rows`` and the first ``ncols`` columns (after phase 1)."""
        T = self.T
        self.T = np.vstack([T[:-1][rows][:, list(range(ncols)) + [T.shape[1] - 1]],
                            np.zeros((1, ncols + 1))])
        self.A0 = self.A0[rows][:, :ncols]
        self.b0 = self.b0[rows]
        self.basis = self.basis[rows]
        self.cost = np.zeros(ncols)

    def refactor(self):
        try:
            X = np.linalg.solve(self.A0[:, self.basis],
                                np.column_stack([self.A0, self.b0]))
        except np.linalg.LinAlgError:
            return
        X[np.abs(X) < 1e-14] = 0.0
        rhs = X[:, -1]
        rhs[(rhs < 0) & (rhs > -1e-9)] = 0.0
        self.T[:-1] = X
        self.T[:-1, self.basis] = 0.0
        self.T[np.arange(self.m), self.basis] = 1.0
        self.T[-1, :-1] = self.cost
        self.T[-1, -1] = 0.0
        self.T[-1] -= self.cost[self.basis] @ self.T[:-1]

    @property
    def m(self):
        return self.T.shape[0] - 1

    def set_cost(self, c):
        N = self.T.shape[1] - 1
        self.cost = np.array(c, dtype=float)
        self.T[-1, :N] = c
        self.T[-1, N] = 0.0
        for i, j in enumerate(self.basis):
            if self.T[-1, j] != 0.0:
                self.T[-1] -= self.T[-1, j] * self.T[i]

    def pivot(self, r, j):
        T = self.T
        T[r] /= T[r, j]
        col = T[:, j].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r])
        T[:, j] = 0.0
        T[r, j] = 1.0
        rhs = T[:-1, -1]
        rhs[(rhs < 0) & (rhs > -1e-9)] = 0.0
        self.basis[r] = j

    def run(self, allowed):
        """Minimise the cost row over columns in ``allowed``; returns a status."""
        degenerate = 0
        best_obj = -self.T[-1, -1]
        while True:
            if self.iterations >= self.max_iter:
                raise NumericalFailure(f"simplex hit the iteration cap {self.max_iter}")
            if self.iterations and self.iterations % self.REFACTOR_EVERY == 0:
                self.refactor()
            T = self.T
            rc = T[-1, :-1][allowed]
            neg = np.flatnonzero(rc < -COST_TOL)
            if neg.size == 0:
                return OPTIMAL
            if degenerate > 50:
                j = allowed[neg[0]]  # Bland
            else:
                j = allowed[neg[np.argmin(rc[neg])]]  # Dantzig
            col = T[:-1, j]
            pos = np.flatnonzero(col > PIVOT_TOL)
            if pos.size == 0:
                return UNBOUNDED
            ratios = T[pos, -1] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * max(1.0, abs(best))]
            r = ties[np.argmin(self.basis[ties])]
            self.pivot(r, j)
            self.iterations += 1
            # Bland stays on until the objective makes real progress
            obj = -self.T[-1, -1]
            if obj < best_obj - 1e-9 * (1.0 + abs(best_obj)):
                best_obj, degenerate = obj, 0
            else:
                degenerate += 1


def solve_lp(lp: LinearProgram) -> LPResult:
    """Two-phase simplex.  Infeasible and unbounded are statuses, not exceptions."""
    n = lp.n_vars
    sign = 1.0 if lp.sense == "min" else -1.0
    c = sign * lp.c

    # variable transforms to x' >= 0: x = lb + x', x = ub - x', or x = x+ - x-
    cols = []  # (original index, multiplier)
    offset = np.zeros(n)
    extra_ub_rows = []  # (std column, bound)
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isfinite(lo):
            offset[j] = lo
            cols.append((j, 1.0))
            if np.isfinite(hi):
                extra_ub_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            offset[j] = hi
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    ns = len(cols)
    M = np.zeros((n, ns))
    for k, (j, s) in enumerate(cols):
        M[j, k] = s

    A_ub = lp.A_ub @ M
    b_ub = lp.b_ub - lp.A_ub @ offset
    A_eq = lp.A_eq @ M
    b_eq = lp.b_eq - lp.A_eq @ offset
    if extra_ub_rows:
        B = np.zeros((len(extra_ub_rows), ns))
        for i, (k, _) in enumerate(extra_ub_rows):
            B[i, k] = 1.0
        A_ub = np.vstack([A_ub, B])
        b_ub = np.concatenate([b_ub, [v for _, v in extra_ub_rows]])
    cs = c @ M
    const = c @ offset

    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    # standard form: [A_ub I; A_eq 0] [x'; s] = b
    A = np.zeros((m, ns + m_ub))
    A[:m_ub, :ns] = A_ub
    A[:m_ub, ns:] = np.eye(m_ub)
    A[m_ub:, :ns] = A_eq
    b = np.concatenate([b_ub, b_eq])
    flip = np.where(b < 0, -1.0, 1.0)
    A *= flip[:, None]
    b = b * flip
    N0 = A.shape[1]

    # artificials for rows without a usable slack
    needs_art = np.ones(m, dtype=bool)
    needs_art[:m_ub] = flip[:m_ub] < 0
    art_rows = np.flatnonzero(needs_art)
    A_full = np.hstack([A, np.zeros((m, art_rows.size))])
    for k, i in enumerate(art_rows):
        A_full[i, N0 + k] = 1.0
    scale = max(1.0, float(np.abs(b).max(initial=0.0)), float(np.abs(A).max(initial=0.0)))
    tab = _Tableau(A_full, b, max_iter=50 * (m + n))
    for i in range(m):
        tab.basis[i] = N0 + np.searchsorted(art_rows, i) if needs_art[i] else ns + i

    if art_rows.size:
        phase1 = np.zeros(A_full.shape[1])
        phase1[N0:] = 1.0
        tab.set_cost(phase1)
        tab.run(np.arange(A_full.shape[1]))
        if -tab.T[-1, -1] > FEAS_TOL * scale:
            return LPResult(INFEASIBLE, iterations=tab.iterations)
        # drive artificials out of the basis, dropping redundant rows
        keep = np.ones(m, dtype=bool)
        for i in range(m):
            if tab.basis[i] >= N0:
                row = tab.T[i, :N0]
                cand = np.flatnonzero(np.abs(row) > 1e-9)
                if cand.size:
                    tab.pivot(i, cand[np.argmax(np.abs(row[cand]))])
                else:
                    keep[i] = False
        tab.restrict(keep, N0)
    else:
        keep = np.ones(m, dtype=bool)

    cost = np.zeros(N0)
    cost[:ns] = cs
    tab.set_cost(cost)
    status = tab.run(np.arange(N0))
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, iterations=tab.iterations)

    xs = np.zeros(N0)
    xs[tab.basis] = tab.T[:-1, -1]
    x = offset + M @ xs[:ns]
    value = float(lp.c @ x)

    # duals of the kept standard rows: B^T y = c_B
    A_kept = A[keep]
    Bm = A_kept[:, tab.basis]
    try:
        y_kept = np.linalg.solve(Bm.T, cost[tab.basis])
    except np.linalg.LinAlgError:
        y_kept = np.linalg.lstsq(Bm.T, cost[tab.basis], rcond=None)[0]
    y = np.zeros(m)
    y[keep] = y_kept
    y *= flip
    dual_ub = sign * y[: lp.A_ub.shape[0]]
    dual_eq = sign * y[m_ub:]
    reduced = lp.c - lp.A_ub.T @ dual_ub - lp.A_eq.T @ dual_eq
    return LPResult(OPTIMAL, x=x, value=value, dual_ub=dual_ub, dual_eq=dual_eq,
                    reduced_costs=reduced, iterations=tab.iterations)


# --------------------------------------------------------------------------
# linear-fractional problems


def ordering_matrix(n: int) -> np.ndarray:
    """Rows ``y_i - y_{i+1} <= 0``."""
    E = np.zeros((max(n - 1, 0), n))
    idx = np.arange(n - 1)
    E[idx, idx] = 1.0
    E[idx, idx + 1] = -1.0
    return E


@dataclass
class LinearFractionalProblem:
    """``r1 @ y / r2 @ y`` over ``{H y <= h, C y = f}``.

    ``H`` stacks the ordering rows, the box rows and any extra inequality rows.
    Use :meth:`sorted_box` to build it from per-position bounds.
    """

    r1: np.ndarray
    r2: np.ndarray
    H: np.ndarray
    h: np.ndarray
    C: np.ndarray = None
    f: np.ndarray = None
    nonneg: bool = False

    def __post_init__(self):
        self.r1 = np.asarray(self.r1, dtype=float)
        self.r2 = np.asarray(self.r2, dtype=float)
        n = self.r1.size
        self.H = np.asarray(self.H, dtype=float).reshape(-1, n)
        self.h = np.asarray(self.h, dtype=float).ravel()
        if self.C is None:
            self.C, self.f = np.zeros((0, n)), np.zeros(0)
        self.C = np.asarray(self.C, dtype=float).reshape(-1, n)
        self.f = np.asarray(self.f, dtype=float).ravel()

    @property
    def n(self) -> int:
        return self.r1.size

    @classmethod
    def sorted_box(cls, r1, r2, lower, upper, A_eq=None, b_eq=None, A_ub=None, b_ub=None):
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        n = lower.size
        I = np.eye(n)
        blocks = [ordering_matrix(n), I, -I]
        rhs = [np.zeros(n - 1), upper, -lower]
        if A_ub is not None and len(A_ub):
            blocks.append(np.asarray(A_ub, dtype=float))
            rhs.append(np.asarray(b_ub, dtype=float))
        return cls(r1, r2, np.vstack(blocks), np.concatenate(rhs), A_eq, b_eq,
                   nonneg=bool(np.all(lower >= 0)))

    def scale(self) -> float:
        s = float(np.abs(self.h).max(initial=0.0))
        if self.f.size:
            s = max(s, float(np.abs(self.f).max()))
        return s if s > 0 else 1.0

    def feasible(self, y, tol=1e-9) -> bool:
        s = self.scale()
        ok = np.all(self.H @ y - self.h <= tol * s)
        if self.C.size:
            ok = ok and np.all(np.abs(self.C @ y - self.f) <= tol * s)
        return bool(ok)

    def ratio(self, y) -> float:
        return float(self.r1 @ y / (self.r2 @ y))

    def linear_program(self, c, sense, extra_eq=None) -> LinearProgram:
        """LP over the original polyhedron (used for pre-checks)."""
        A_eq, b_eq = self.C, self.f
        if extra_eq is not None:
            A_eq = np.vstack([A_eq, extra_eq[0]])
            b_eq = np.concatenate([b_eq, extra_eq[1]])
        lb = np.zeros(self.n) if self.nonneg else np.full(self.n, -np.inf)
        return LinearProgram(c, self.H, self.h, A_eq, b_eq, lb=lb, sense=sense)


def charnes_cooper(problem: LinearFractionalProblem, direction: str) -> LinearProgram:
    """LP in ``(z, t)``: optimise ``r1 @ z`` s.t. ``H z - h t <= 0``, ``C z - f t = 0``,
    ``r2 @ z = 1``, ``t >= T_MIN``.  Recover ``y = z / t``."""
    if direction not in ("min", "max"):
        raise ValueError("direction must be 'min' or 'max'")
    n = problem.n
    A_ub = np.hstack([problem.H, -problem.h[:, None]])
    A_eq = np.vstack([
        np.hstack([problem.C, -problem.f[:, None]]),
        np.concatenate([problem.r2, [0.0]])[None, :],
    ])
    b_eq = np.zeros(A_eq.shape[0])
    b_eq[-1] = 1.0
    lb = np.concatenate([np.zeros(n) if problem.nonneg else np.full(n, -np.inf), [T_MIN]])
    c = np.concatenate([problem.r1, [0.0]])
    return LinearProgram(c, A_ub, np.zeros(A_ub.shape[0]), A_eq, b_eq, lb=lb, sense=direction)


@dataclass
class LFPSolution:
    value: float
    y: np.ndarray | None
    iterations: int = 0
    warnings: list = field(default_factory=list)


def _scaled(problem: LinearFractionalProblem):
    s = problem.scale()
    return LinearFractionalProblem(problem.r1, problem.r2, problem.H, problem.h / s,
                                   problem.C, problem.f / s, problem.nonneg), s


def denominator_range(problem: LinearFractionalProblem):
    """``(min, max)`` of ``r2 @ y`` over the polyhedron; raises if it is empty."""
    lo = solve_lp(problem.linear_program(problem.r2, "min"))
    if lo.status == INFEASIBLE:
        raise InfeasibleConstraints("the feasible set is empty", certificate=lo)
    hi = solve_lp(problem.linear_program(problem.r2, "max"))
    lo_v = -math.inf if lo.status == UNBOUNDED else lo.value
    hi_v = math.inf if hi.status == UNBOUNDED else hi.value
    return lo_v, hi_v, lo.iterations + hi.iterations


def solve_lfp(problem: LinearFractionalProblem, direction: str,
              allow_infinite: bool = False) -> LFPSolution:
    """Optimise the ratio through Charnes-Cooper.

    Feasible points with a non-positive denominator raise
    :class:`DegenerateDenominator` unless ``allow_infinite`` is set (quantile
    ratios), in which case a positive numerator there sends the maximum to +inf.
    """
    prob, s = _scaled(problem)
    d_lo, d_hi, iters = denominator_range(prob)
    warnings = []
    if d_lo <= 1e-12:
        if not allow_infinite:
            raise DegenerateDenominator(
                f"the denominator reaches {d_lo:.3g} <= 0 on the feasible set")
        if d_hi <= 1e-12:
            raise DegenerateDenominator("the denominator is never positive")
        if direction == "max":
            # numerator where the denominator vanishes
            probe = solve_lp(prob.linear_program(
                prob.r1, "max", extra_eq=(prob.r2[None, :], np.zeros(1))))
            iters += probe.iterations
            if probe.status == UNBOUNDED or (probe.optimal and probe.value > 1e-12):
                return LFPSolution(math.inf, probe.x * s if probe.x is not None else None,
                                   iters, warnings)
        warnings.append("denominator vanishes on part of the feasible set")
    lp = charnes_cooper(prob, direction)
    res = solve_lp(lp)
    iters += res.iterations
    if res.status == INFEASIBLE:
        raise InfeasibleConstraints("Charnes-Cooper program is infeasible", certificate=res)
    if res.status == UNBOUNDED:
        if direction == "max" and allow_infinite:
            return LFPSolution(math.inf, None, iters, warnings)
        raise NumericalFailure("Charnes-Cooper program is unbounded")
    z, t = res.x[:-1], res.x[-1]
    if t <= 1e-10:
        raise DegenerateDenominator(f"Charnes-Cooper scale t* = {t:.3g} is not positive")
    y = z / t * s
    return LFPSolution(float(res.value), y, iters, warnings)


# --------------------------------------------------------------------------
# dyadic Dinkelbach bisection


@dataclass
class DinkelbachOracle:
    """``f(lam)`` is the parametric value ``opt_y (N(y) - lam D(y))`` scaled so that
    ``D <= 1`` on the feasible set; it may return ``(value, argument)``."""

    f: Callable
    direction: str = "max"
    lo: float = 0.0
    hi: float = 1.0
    eps: float = 1e-6

    def __post_init__(self):
        if self.direction not in ("min", "max"):
            raise ValueError("direction must be 'min' or 'max'")
        if not self.hi > self.lo:
            raise ValueError("bracket must satisfy lo < hi")
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def cap(self) -> int:
        return math.ceil(math.log2((self.hi - self.lo) / self.eps)) + 8


@dataclass
class DinkelbachResult:
    lam: float
    iterations: int
    value: float
    argument: object = None
    widths: list = field(default_factory=list)
    brackets: list = field(default_factory=list)
    trace: list = field(default_factory=list)  # (lam, f(lam), argument)


def _call(oracle, lam):
    out = oracle.f(lam)
    if isinstance(out, tuple):
        return float(out[0]), out[1]
    return float(out), None


def dinkelbach_bisect(oracle: DinkelbachOracle) -> DinkelbachResult:
    """Root of the decreasing parametric value by dyadic steps.

    Starts at the bracket midpoint and moves by ``(hi - lo) 2^-(i+1)`` towards
    the root: up when ``f > 0``, down otherwise.  The same rule serves both
    directions since the min-value function is also decreasing in ``lam``.
    Stops when ``0 >= f > -eps`` (max) or ``0 >= f >= -eps`` (min).
    """
    eps = oracle.eps
    f_lo, arg_lo = _call(oracle, oracle.lo)
    f_hi, arg_hi = _call(oracle, oracle.hi)
    if f_lo < -1e-12 or f_hi > 1e-12:
        raise BracketViolation(
            f"sign conditions fail: f({oracle.lo}) = {f_lo:.3g}, f({oracle.hi}) = {f_hi:.3g}")

    def done(v):
        return (0 >= v > -eps) if oracle.direction == "max" else (0 >= v >= -eps)

    width = oracle.hi - oracle.lo
    trace = [(oracle.lo, f_lo, arg_lo), (oracle.hi, f_hi, arg_hi)]
    if done(f_lo):
        return DinkelbachResult(oracle.lo, 0, f_lo, arg_lo, [width], [(oracle.lo, oracle.hi)], trace)
    a, b = oracle.lo, oracle.hi
    widths, brackets = [b - a], [(a, b)]
    lam = a + width / 2
    for i in range(1, oracle.cap() + 1):
        v, arg = _call(oracle, lam)
        trace.append((lam, v, arg))
        if v > 0:
            a = lam
        else:
            b = lam
        widths.append(b - a)
        brackets.append((a, b))
        if done(v):
            return DinkelbachResult(lam, i, v, arg, widths, brackets, trace)
        step = math.ldexp(width, -(i + 1))
        lam = lam + step if v > 0 else lam - step
    if done(f_hi):
        return DinkelbachResult(oracle.hi, oracle.cap(), f_hi, arg_hi, widths, brackets, trace)
    raise Stalled(f"no stop after {oracle.cap()} iterations (last f = {v:.3g})")
