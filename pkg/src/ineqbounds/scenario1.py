"""Sharp bounds from grouped tables, with and without linear side information.

Without side information the Gini is a ratio of a quadratic to a linear form in
``p``, where ``p_d`` is the share of group ``d`` sitting at its lower endpoint
and the rest sit at the upper endpoint.  Minimisers switch once from "all at
upper" to "all at lower"; maximisers put the groups below some ``d0`` at their
lower end, the groups above at their upper end and split group ``d0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (
    BoundsResult,
    ConstraintSet,
    GroupedTable,
    IndexSpec,
    gini,
    new_diagnostics,
    quantile_position,
)
from .errors import (
    IndexOutOfRange,
    InfeasibleConstraints,
    NonPositiveMean,
    QuantileOnBoundary,
)
from .lfp import DinkelbachOracle, LinearFractionalProblem, dinkelbach_bisect, solve_lfp

DEFAULT_EPS = 1e-6


@dataclass(frozen=True)
class CornerAllocation:
    p: tuple[float, ...]

    def __post_init__(self):
        if any(not 0 <= x <= 1 for x in self.p):
            raise ValueError("corner fractions must lie in [0, 1]")


@dataclass(frozen=True)
class GiniQuadraticForm:
    """``G(p) = (v' A v / 2) / (v' b)`` with ``v = (p, 1 - p)``."""

    A: np.ndarray
    b: np.ndarray

    @property
    def D(self) -> int:
        return self.b.size // 2

    def stack(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.concatenate([p, 1.0 - p])

    def numerator(self, p) -> float:
        v = self.stack(p)
        return 0.5 * float(v @ self.A @ v)

    def denominator(self, p) -> float:
        return float(self.stack(p) @ self.b)

    def __call__(self, p) -> float:
        den = self.denominator(p)
        if den <= 0:
            raise NonPositiveMean("allocation has zero mean")
        return self.numerator(p) / den

    def line(self, p0, d0: int):
        """Coefficients of ``N = a t^2 + b t + c`` and ``D = d t + e`` along ``p_{d0} = t``
        (0-based ``d0``) with the other coordinates of ``p0`` fixed."""
        p = np.array(p0, dtype=float)
        p[d0] = 0.0
        v0 = self.stack(p)
        e = np.zeros_like(v0)
        e[d0], e[d0 + self.D] = 1.0, -1.0
        Av0 = self.A @ v0
        return (0.5 * float(e @ self.A @ e), float(e @ Av0), 0.5 * float(v0 @ Av0),
                float(e @ self.b), float(v0 @ self.b))


def build_gini_form(table: GroupedTable) -> GiniQuadraticForm:
    s = table.shares
    x = np.concatenate([table.lowers, table.uppers])
    w = np.concatenate([s, s])
    A = np.outer(w, w) * np.abs(x[:, None] - x[None, :])
    return GiniQuadraticForm(A, w * x)


def _check_mean(table: GroupedTable):
    pos = table.count_array > 0
    if not np.any(table.uppers[pos] > 0):
        raise NonPositiveMean("every completion of the table has zero mean")


def step_vectors(D: int) -> list[np.ndarray]:
    """``(0,...,0,1,...,1)`` with ``m`` leading zeros, ``m = 0..D``."""
    return [np.concatenate([np.zeros(m), np.ones(D - m)]) for m in range(D + 1)]


def family_base(D: int, d0: int) -> np.ndarray:
    """Lower groups at their lower ends, upper groups at their upper ends (0-based d0)."""
    p = np.zeros(D)
    p[:d0] = 1.0
    return p


def _ratio_line_max(a, b, c, d, e):
    """Maximise ``(a t^2 + b t + c)/(d t + e)`` over ``t`` in [0, 1]."""
    cands = [0.0, 1.0]
    # stationary points: a d t^2 + 2 a e t + (b e - c d) = 0
    qa, qb, qc = a * d, 2 * a * e, b * e - c * d
    if abs(qa) > 1e-15:
        disc = qb * qb - 4 * qa * qc
        if disc >= 0:
            r = math.sqrt(disc)
            cands += [(-qb - r) / (2 * qa), (-qb + r) / (2 * qa)]
    elif abs(qb) > 1e-15:
        cands.append(-qc / qb)
    best_t, best_v = None, -math.inf
    for t in cands:
        if not 0.0 <= t <= 1.0:
            continue
        den = d * t + e
        if den <= 0:
            continue
        v = (a * t * t + b * t + c) / den
        if v > best_v + 1e-15 or (abs(v - best_v) <= 1e-15 and (best_t is None or t < best_t)):
            best_t, best_v = t, v
    return best_t, best_v


def _grid_candidates(t: float, count: int):
    if count <= 0:
        return [0.0]
    k = t * count
    lo, hi = math.floor(k + 1e-12), math.ceil(k - 1e-12)
    return sorted({min(max(lo, 0), count) / count, min(max(hi, 0), count) / count})


def _argbest(values, better):
    best = 0
    for i in range(1, len(values)):
        if better(values[i], values[best]):
            best = i
    return best


def _resolve_grid(table: GroupedTable, grid: bool | None) -> bool:
    return table.is_integral if grid is None else bool(grid)


def gini_bounds_1a(table: GroupedTable, grid: bool | None = None) -> BoundsResult:
    """Closed-form sharp Gini bounds for a grouped table.

    ``grid=True`` restricts the split group to multiples of ``1/n_d`` and gives
    the exact sample-level bounds.  ``grid=False`` optimises over fractions
    ``p`` in [0,1]^D, which overstates the maximum by O(1/n) for small groups
    but depends on the table only through its shares.  The default is the grid
    for integer counts and the relaxation otherwise.
    """
    _check_mean(table)
    grid = _resolve_grid(table, grid)
    form = build_gini_form(table)
    D = table.D
    diag = new_diagnostics(exact_enumeration=True)

    steps = [p for p in step_vectors(D) if form.denominator(p) > 0]
    lows = [form(p) for p in steps]
    i = _argbest(lows, lambda a, b: a < b - 1e-15)
    argmin = steps[i]

    counts = table.int_counts if grid else None
    best = None
    for d0 in range(D):
        base = family_base(D, d0)
        coef = form.line(base, d0)
        t, v = _ratio_line_max(*coef)
        if t is None:
            continue
        if grid:
            cands = _grid_candidates(t, int(counts[d0]))
            vals = []
            for tc in cands:
                base[d0] = tc
                vals.append(form(base) if form.denominator(base) > 0 else -math.inf)
            j = int(np.argmax(vals))
            t, v = cands[j], vals[j]
        if best is None or v > best[0] + 1e-15:
            p = base.copy()
            p[d0] = t
            best = (v, p, d0)
    upper, argmax, d0 = best
    diag["d0"] = d0 + 1
    diag["distinct_values"] = _distinct(table.expand(argmax)) if grid else None
    return BoundsResult("gini", "1A", float(lows[i]), float(upper), argmin, argmax, diag)


def _mean_range(table: GroupedTable):
    s = table.shares
    return float(s @ table.lowers), float(s @ table.uppers)


def gini_bounds_1a_dinkelbach(table: GroupedTable, eps: float = DEFAULT_EPS,
                              grid: bool | None = None) -> BoundsResult:
    """Same bounds through dyadic Dinkelbach bisection.

    The parametric subproblem ``opt_p N(p) - lam D(p)`` is solved over the
    shapes that carry the optimum: the split families for the maximum and the
    step vectors for the minimum.  The returned endpoints are the index values
    at the final parametric optimisers.
    """
    _check_mean(table)
    grid = _resolve_grid(table, grid)
    form = build_gini_form(table)
    D = table.D
    _, mu_max = _mean_range(table)
    counts = table.int_counts if grid else None
    steps = step_vectors(D)

    def f_max(lam):
        best_v, best_p = -math.inf, None
        for d0 in range(D):
            base = family_base(D, d0)
            a, b, c, d, e = form.line(base, d0)
            bb = b - lam * d
            if a < -1e-15:
                t = min(max(-bb / (2 * a), 0.0), 1.0)
                cands = [t]
            else:
                cands = [0.0, 1.0]
            if grid:
                cands = sorted({g for t in cands for g in _grid_candidates(t, int(counts[d0]))})
            for t in cands:
                v = a * t * t + bb * t + c - lam * e
                if v > best_v + 1e-15:
                    p = base.copy()
                    p[d0] = t
                    best_v, best_p = v, p
        return best_v / mu_max, best_p

    def f_min(lam):
        vals = [form.numerator(p) - lam * form.denominator(p) for p in steps]
        i = int(np.argmin(vals))
        return vals[i] / mu_max, steps[i]

    hi_res = dinkelbach_bisect(DinkelbachOracle(f_max, "max", 0.0, 1.0, eps))
    lo_res = dinkelbach_bisect(DinkelbachOracle(f_min, "min", 0.0, 1.0, eps))

    def pick(res, better):
        best = None
        for _, _, p in res.trace:
            if p is None or form.denominator(p) <= 0:
                continue
            g = form(p)
            if best is None or better(g, best[0]):
                best = (g, p)
        return best

    upper, argmax = pick(hi_res, lambda a, b: a > b)
    lower, argmin = pick(lo_res, lambda a, b: a < b)
    diag = new_diagnostics(iterations=hi_res.iterations + lo_res.iterations)
    diag["lambda_max"] = hi_res.lam
    diag["lambda_min"] = lo_res.lam
    diag["iterations_max"] = hi_res.iterations
    diag["iterations_min"] = lo_res.iterations
    diag["widths_max"] = hi_res.widths
    diag["widths_min"] = lo_res.widths
    return BoundsResult("gini", "1A", float(lower), float(upper), argmin, argmax, diag)


def quantization_gap(table: GroupedTable) -> tuple[float, float]:
    """Continuous minus grid Gini maximum, and its mean-value bound ``sup|G'| / n_{d0}``."""
    cont = gini_bounds_1a(table, grid=False)
    disc = gini_bounds_1a(table, grid=True)
    form = build_gini_form(table)
    d0 = cont.diagnostics["d0"] - 1
    a, b, c, d, e = form.line(family_base(table.D, d0), d0)
    # G' = (a d t^2 + 2 a e t + b e - c d) / (d t + e)^2; bound numerator and denominator separately
    ts = [0.0, 1.0]
    if abs(a * d) > 1e-15:
        ts.append(min(max(-e / d, 0.0), 1.0))
    num = max(abs(a * d * t * t + 2 * a * e * t + b * e - c * d) for t in ts)
    den = min(d * t + e for t in (0.0, 1.0)) ** 2
    bound = num / den / table.int_counts[d0]
    return cont.upper - disc.upper, float(bound)


# --------------------------------------------------------------------------
# quantile ratio


def _safe_ratio(num: float, den: float) -> float:
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return num / den


def _quantile_group(table: GroupedTable, tau: float, rule: str) -> int:
    if rule == "share":
        cum = np.cumsum(table.shares)
        for d in range(table.D):
            prev = cum[d - 1] if d else 0.0
            if abs(cum[d] - tau) <= 1e-12 or (d and abs(prev - tau) <= 1e-12):
                raise QuantileOnBoundary(f"a cumulative share equals tau = {tau}")
            if prev < tau < cum[d]:
                return d
        raise QuantileOnBoundary(f"no group straddles tau = {tau}")
    n = table.n
    k = quantile_position(tau, n)
    if k < 1:
        raise IndexOutOfRange(f"floor(tau * n) = {k} < 1 for n = {n}")
    ends = np.cumsum(table.int_counts)
    return int(np.searchsorted(ends, k, side="left"))


def quantile_ratio_bounds_1a(table: GroupedTable, tau1: float, tau2: float,
                             rule: str = "share") -> BoundsResult:
    """Closed-form bounds on ``y_(tau2) / y_(tau1)``.

    ``rule="share"`` locates each quantile in the group whose cumulative share
    straddles tau; ``rule="position"`` uses the group holding the order statistic
    ``floor(tau n)`` of the integer-count sample.
    """
    if not 0 < tau1 < tau2 < 1:
        raise ValueError("need 0 < tau1 < tau2 < 1")
    if rule not in ("share", "position"):
        raise ValueError("rule must be 'share' or 'position'")
    d1 = _quantile_group(table, tau1, rule)
    d2 = _quantile_group(table, tau2, rule)
    lo1, hi1 = table.brackets[d1]
    lo2, hi2 = table.brackets[d2]
    diag = new_diagnostics(groups=[d1 + 1, d2 + 1])
    if rule == "position" and quantile_position(tau1, table.n) == quantile_position(tau2, table.n):
        return BoundsResult("qratio", "1A", 1.0, 1.0, None, None, diag)
    upper = _safe_ratio(hi2, lo1)
    lower = max(_safe_ratio(lo2, hi1), 1.0)
    argmin = np.array([hi1, lo2])
    argmax = np.array([lo1, hi2])
    return BoundsResult("qratio", "1A", float(lower), float(upper), argmin, argmax, diag)


# --------------------------------------------------------------------------
# linear side information


def distinct_count(values, rel_tol: float = 1e-7) -> int:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return 0
    count, anchor = 1, v[0]
    for x in v[1:]:
        if x - anchor > rel_tol * (1 + abs(anchor)):
            count += 1
            anchor = x
    return count


_distinct = distinct_count


def sample_problem(table: GroupedTable, r1, r2, constraints: ConstraintSet | None,
                   extra_ub=None) -> LinearFractionalProblem:
    constraints = constraints or ConstraintSet()
    constraints.check_group_means(table)
    A_eq, b_eq, A_ub, b_ub = constraints.matrices(table)
    if extra_ub is not None:
        A_ub = np.vstack([A_ub, extra_ub[0]])
        b_ub = np.concatenate([b_ub, extra_ub[1]])
    lower, upper = table.box()
    return LinearFractionalProblem.sorted_box(r1, r2, lower, upper, A_eq, b_eq, A_ub, b_ub)


def _prop2_check(diag, y, constraints, table, slack=0):
    if y is None:
        return
    k = distinct_count(y)
    limit = constraints.q1 + constraints.q2 + 2 * table.D + slack
    diag["distinct_values"] = max(diag.get("distinct_values") or 0, k)
    if k > limit:
        diag["warnings"].append(
            f"extremal allocation has {k} distinct values, more than {limit}; "
            "the solver may have returned a non-vertex point of an optimal face")


def bounds_1b(index: IndexSpec, table: GroupedTable,
              constraints: ConstraintSet | None = None) -> BoundsResult:
    """Sharp bounds over the full sorted sample through Charnes-Cooper LPs."""
    constraints = constraints or ConstraintSet()
    if index.kind == "hoover":
        return hoover_bounds(table, constraints)
    n = table.n
    r1, r2 = index.coefficients(n)
    prob = sample_problem(table, r1, r2, constraints)
    allow_inf = index.kind == "qratio"
    lo = solve_lfp(prob, "min", allow_infinite=allow_inf)
    hi = solve_lfp(prob, "max", allow_infinite=allow_inf)
    diag = new_diagnostics(iterations=lo.iterations + hi.iterations)
    diag["warnings"].extend(dict.fromkeys(lo.warnings + hi.warnings))
    for sol in (lo, hi):
        _prop2_check(diag, sol.y, constraints, table)
    return BoundsResult(index.kind, "1B" if len(constraints) else "1A",
                        float(lo.value), float(hi.value), lo.y, hi.y, diag)


def hoover_rows(n: int, k: int):
    """Coefficients ``(r1, r2)`` and the split rows ``y_k <= mean <= y_{k+1}``."""
    r1 = np.full(n, float(k))
    r1[:k] -= n
    r2 = np.full(n, float(n))
    rows, rhs = [], []
    if k >= 1:
        row = np.full(n, -1.0)
        row[k - 1] += n
        rows.append(row)
        rhs.append(0.0)
    if k < n:
        row = np.full(n, 1.0)
        row[k] -= n
        rows.append(row)
        rhs.append(0.0)
    return r1, r2, (np.array(rows).reshape(-1, n), np.array(rhs))


def _group_constant(A: np.ndarray, ends: np.ndarray) -> bool:
    return all(np.ptp(A[:, a:b], axis=1).max(initial=0.0) <= 1e-12 * (1 + np.abs(A).max())
               for a, b in zip(ends[:-1], ends[1:]) if b > a and A.size)


def hoover_split_problem(table: GroupedTable, k: int, mats):
    """Split-``k`` program over the sums of each group's left and right parts.

    Exact when every constraint row is constant within groups: the objective,
    the constraints and ``y_k <= mean <= y_{k+1}`` then depend on ``y`` only
    through these sums.  Returns the problem and the map ``M`` with ``y = M z``.
    """
    n = table.n
    ends = np.concatenate([[0], np.cumsum(table.int_counts)])
    parts = []  # (group, first position, size, is_left)
    for d in range(table.D):
        a, b = int(ends[d]), int(ends[d + 1])
        if min(b, k) > a:
            parts.append((d, a, min(b, k) - a, True))
        if b > max(a, k):
            parts.append((d, max(a, k), b - max(a, k), False))
    v = len(parts)
    M = np.zeros((n, v))
    for j, (_, first, m, _) in enumerate(parts):
        M[first:first + m, j] = 1.0 / m
    r1, r2, _ = hoover_rows(n, k)
    lowers = np.array([table.lowers[d] * m for d, _, m, _ in parts])
    uppers = np.array([table.uppers[d] * m for d, _, m, _ in parts])
    sizes = np.array([m for _, _, m, _ in parts], dtype=float)
    left = np.array([is_left for *_, is_left in parts])
    split = np.where(left[:, None], np.eye(v), -np.eye(v)) \
        - np.where(left, 1.0, -1.0)[:, None] * (sizes[:, None] / n)
    A_eq, b_eq, A_ub, b_ub = mats
    H = np.vstack([np.eye(v), -np.eye(v), A_ub @ M, split])
    h = np.concatenate([uppers, -lowers, b_ub, np.zeros(v)])
    prob = LinearFractionalProblem(r1 @ M, r2 @ M, H, h, A_eq @ M, b_eq,
                                   nonneg=bool(np.all(lowers >= 0)))
    return prob, M


def hoover_bounds(table: GroupedTable, constraints: ConstraintSet | None = None,
                  aggregate: bool | None = None) -> BoundsResult:
    """Hoover bounds as the min/max over splits ``k`` of linear-fractional programs.

    ``aggregate`` selects the group-sum form of each split program (default:
    whenever every constraint row is constant within groups); otherwise each
    split is solved over the full sorted sample.
    """
    constraints = constraints or ConstraintSet()
    n = table.n
    constraints.check_group_means(table)
    mats = constraints.matrices(table)
    ends = np.concatenate([[0], np.cumsum(table.int_counts)])
    if aggregate is None:
        aggregate = all(_group_constant(np.atleast_2d(A), ends) for A in (mats[0], mats[2]))
    best_lo, best_hi = None, None
    iters, warnings = 0, []
    for k in range(n + 1):
        if aggregate:
            prob, M = hoover_split_problem(table, k, mats)
        else:
            r1, r2, extra = hoover_rows(n, k)
            prob, M = sample_problem(table, r1, r2, constraints, extra_ub=extra), None
        try:
            lo = solve_lfp(prob, "min")
            hi = solve_lfp(prob, "max")
        except InfeasibleConstraints:
            continue
        if M is not None:
            lo.y, hi.y = M @ lo.y, M @ hi.y
        iters += lo.iterations + hi.iterations
        warnings += lo.warnings + hi.warnings
        if best_lo is None or lo.value < best_lo.value:
            best_lo = lo
        if best_hi is None or hi.value > best_hi.value:
            best_hi = hi
    if best_lo is None:
        raise InfeasibleConstraints("no split of the sample is feasible")
    diag = new_diagnostics(iterations=iters)
    diag["aggregated"] = bool(aggregate)
    diag["warnings"].extend(dict.fromkeys(warnings))
    for sol in (best_lo, best_hi):
        _prop2_check(diag, sol.y, constraints, table, slack=2)
    return BoundsResult("hoover", "1B" if len(constraints) else "1A",
                        float(max(best_lo.value, 0.0)), float(best_hi.value),
                        best_lo.y, best_hi.y, diag)


def bounds_1(index: IndexSpec, table: GroupedTable, constraints: ConstraintSet | None = None,
             grid: bool | None = None) -> BoundsResult:
    """Dispatch: closed forms without side information, LPs otherwise."""
    if constraints is not None and len(constraints):
        return bounds_1b(index, table, constraints)
    if index.kind == "gini":
        return gini_bounds_1a(table, grid=grid)
    if index.kind == "qratio":
        return quantile_ratio_bounds_1a(table, index.tau1, index.tau2,
                                        rule="position" if grid is True else "share")
    return hoover_bounds(table)


def corner_sample(table: GroupedTable, p) -> np.ndarray:
    """Sorted sample of an integer-count table at allocation ``p``."""
    return table.expand(p)


def expanded_gini(table: GroupedTable, p) -> float:
    return gini(corner_sample(table, p))
