"""Sharp Gini bounds for micro data mixing points and overlapping intervals.

The production path uses threshold allocations: the minimum pushes every
interval towards a common pivot, the maximum pushes intervals away from it and
chooses endpoints for the intervals straddling the pivot.  The share-space path
optimises the Gini directly over the polytope of admissible value shares on the
endpoint lattice and serves as an independent check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .core import (
    BoundsResult,
    IntervalObservation,
    gini,
    new_diagnostics,
)
from .errors import NonPositiveMean, SubproblemNotConverged
from .lfp import (
    INFEASIBLE,
    DinkelbachOracle,
    LinearProgram,
    dinkelbach_bisect,
    solve_lp,
)

DEFAULT_BUDGET = 20
DEFAULT_EPS = 1e-6


# --------------------------------------------------------------------------
# data


@dataclass
class IntervalData:
    """Points and interval types with (possibly fractional) masses.

    Duplicate intervals share a type.  ``obs`` maps each original observation
    to ``("p", index)`` or ``("q", index)`` so allocations can be reported in
    input order.
    """

    point_values: np.ndarray
    point_weights: np.ndarray
    lowers: np.ndarray
    uppers: np.ndarray
    type_weights: np.ndarray
    obs: list = field(default_factory=list)

    @classmethod
    def from_observations(cls, data) -> "IntervalData":
        pv, pw, types, tw, obs = {}, [], {}, [], []
        for o in data:
            if not isinstance(o, IntervalObservation):
                o = IntervalObservation(*o)
            if o.is_point():
                if o.lower not in pv:
                    pv[o.lower] = len(pv)
                    pw.append(0.0)
                pw[pv[o.lower]] += 1.0
                obs.append(("p", pv[o.lower]))
            else:
                key = (o.lower, o.upper)
                if key not in types:
                    types[key] = len(types)
                    tw.append(0.0)
                tw[types[key]] += 1.0
                obs.append(("q", types[key]))
        keys = list(types)
        return cls(np.array(list(pv), dtype=float), np.array(pw),
                   np.array([k[0] for k in keys], dtype=float),
                   np.array([k[1] for k in keys], dtype=float), np.array(tw), obs)

    def with_weights(self, point_weights, type_weights) -> "IntervalData":
        return IntervalData(self.point_values, np.asarray(point_weights, dtype=float),
                            self.lowers, self.uppers, np.asarray(type_weights, dtype=float),
                            self.obs)

    @property
    def total(self) -> float:
        return float(self.point_weights.sum() + self.type_weights.sum())

    @property
    def n_types(self) -> int:
        return self.lowers.size

    @property
    def has_intervals(self) -> bool:
        return bool(np.any(self.type_weights > 0))

    @property
    def is_integral(self) -> bool:
        w = np.concatenate([self.point_weights, self.type_weights])
        return bool(np.all(w == np.round(w)))

    def allocation(self, type_values_lo, k_lower=None) -> np.ndarray:
        """Per-observation values.  ``k_lower[t]`` members of type t (in input
        order) take ``type_values_lo[t]``; the rest take the type's upper end."""
        used = np.zeros(self.n_types, dtype=np.int64)
        out = np.empty(len(self.obs))
        for i, (kind, j) in enumerate(self.obs):
            if kind == "p":
                out[i] = self.point_values[j]
            else:
                if k_lower is None or used[j] < k_lower[j]:
                    out[i] = type_values_lo[j]
                else:
                    out[i] = self.uppers[j]
                used[j] += 1
        return out


def _as_data(data) -> IntervalData:
    return data if isinstance(data, IntervalData) else IntervalData.from_observations(data)


# --------------------------------------------------------------------------
# lattice and share system


@dataclass(frozen=True)
class EndpointLattice:
    B: np.ndarray
    U: np.ndarray
    b_index: np.ndarray  # position of each B value in U

    @property
    def K(self) -> int:
        return self.B.size


def build_lattice(data) -> EndpointLattice:
    d = _as_data(data)
    live = d.type_weights > 0
    B = np.unique(np.concatenate([d.lowers[live], d.uppers[live]]))
    U = np.unique(np.concatenate([B, d.point_values[d.point_weights > 0]]))
    return EndpointLattice(B, U, np.searchsorted(U, B))


@dataclass
class ShareSystem:
    """Admissible unknown shares ``phi`` on ``U``.

    ``lower[r] <= block[r] @ phi <= upper[r]`` for every block of consecutive
    endpoints, ``sum(phi) = total`` and ``phi = 0`` outside ``[b_1, b_K]``.
    """

    lattice: EndpointLattice
    psi: np.ndarray
    blocks: np.ndarray
    block_ends: list
    lower: np.ndarray
    upper: np.ndarray
    total: float
    outside: np.ndarray
    n: float

    def polytope(self):
        """``(A_ub, b_ub, A_eq, b_eq, ub)`` over phi >= 0."""
        A_ub = np.vstack([-self.blocks, self.blocks])
        b_ub = np.concatenate([-self.lower, self.upper])
        A_eq = np.ones((1, self.psi.size))
        ub = np.where(self.outside, 0.0, np.inf)
        return A_ub, b_ub, A_eq, np.array([self.total]), ub

    def feasible(self, phi, tol=1e-9) -> bool:
        s = self.blocks @ phi
        return bool(np.all(s >= self.lower - tol) and np.all(s <= self.upper + tol)
                    and abs(phi.sum() - self.total) <= tol and np.all(phi >= -tol)
                    and np.all(np.abs(phi[self.outside]) <= tol))


def build_share_system(data, lattice: EndpointLattice | None = None) -> ShareSystem:
    d = _as_data(data)
    lattice = lattice or build_lattice(d)
    U, B = lattice.U, lattice.B
    n = d.total
    psi = np.zeros(U.size)
    for v, w in zip(d.point_values, d.point_weights):
        psi[np.searchsorted(U, v)] += w / n
    rows, ends, lo, hi = [], [], [], []
    K = B.size
    for i in range(K):
        for j in range(i + 1, K):
            if i == 0 and j == K - 1:
                continue  # the full block is the equality row
            a, b = B[i], B[j]
            rows.append(((U >= a) & (U <= b)).astype(float))
            ends.append((float(a), float(b)))
            inside = (d.lowers >= a) & (d.uppers <= b)
            meets = (d.lowers <= b) & (d.uppers >= a)
            lo.append(d.type_weights[inside].sum() / n)
            hi.append(d.type_weights[meets].sum() / n)
    outside = (U < B[0]) | (U > B[-1]) if K else np.ones(U.size, dtype=bool)
    blocks = np.array(rows).reshape(-1, U.size)
    return ShareSystem(lattice, psi, blocks, ends, np.array(lo), np.array(hi),
                       float(d.type_weights.sum() / n), outside, n)


def distance_kernel(U) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    return np.abs(U[:, None] - U[None, :])


def share_gini(masses, U, K=None) -> float:
    """Gini of the distribution with the given masses on support ``U``."""
    m = np.asarray(masses, dtype=float)
    K = distance_kernel(U) if K is None else K
    den = m.sum() * (m @ U)
    if den <= 0:
        raise NonPositiveMean("Gini needs a positive mean")
    return 0.5 * float(m @ K @ m) / den


def _batch_gini(M, U, K):
    """Row-wise Gini of mass matrix ``M`` on support ``U``; NaN for zero means."""
    den = M.sum(axis=1) * (M @ U)
    num = 0.5 * np.einsum("ij,ij->i", M @ K, M)
    out = np.full(M.shape[0], np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


# --------------------------------------------------------------------------
# threshold algorithms


def _support(d: IntervalData):
    U = np.unique(np.concatenate([d.point_values, d.lowers, d.uppers]))
    return U, distance_kernel(U)


def _point_masses(d: IntervalData, U):
    m = np.zeros(U.size)
    np.add.at(m, np.searchsorted(U, d.point_values), d.point_weights)
    return m


def _degenerate(d: IntervalData, index_name="gini"):
    g = gini(d.point_values.repeat(d.point_weights.astype(int))) if d.is_integral else \
        share_gini(d.point_weights, d.point_values)
    alloc = d.allocation(d.lowers)
    return BoundsResult(index_name, "2", g, g, alloc, alloc, new_diagnostics())


def gini_min_threshold(data) -> BoundsResult:
    """Minimum over pivots ``u0`` of the Gini when every interval moves to the
    point of itself closest to ``u0``."""
    d = _as_data(data)
    if not d.has_intervals:
        return _degenerate(d)
    U, K = _support(d)
    lat = build_lattice(d)
    pivots = np.unique(np.concatenate([lat.U, U]))
    base = _point_masses(d, U)
    M = np.tile(base, (pivots.size, 1))
    vals = np.clip(pivots[:, None], d.lowers[None, :], d.uppers[None, :])
    # pivot values need their own support columns
    U2 = np.unique(np.concatenate([U, pivots]))
    K2 = distance_kernel(U2)
    M2 = np.zeros((pivots.size, U2.size))
    M2[:, np.searchsorted(U2, U)] = M
    cols = np.searchsorted(U2, vals)
    rows = np.repeat(np.arange(pivots.size), d.n_types)
    np.add.at(M2, (rows, cols.ravel()), np.tile(d.type_weights, pivots.size))
    g = _batch_gini(M2, U2, K2)
    diag = new_diagnostics()
    if np.all(np.isnan(g)):
        diag["warnings"].append("every completion has zero mean; Gini set to 0")
        return BoundsResult("gini", "2", 0.0, 0.0, None, None, diag)
    i = int(np.nanargmin(g))
    diag["pivot"] = float(pivots[i])
    return BoundsResult("gini", "2", float(g[i]), float(g[i]), d.allocation(vals[i]), None, diag)


def _line_best(a, b, c, dd, e, x_lo, x_hi, integral):
    """Best ``x`` in [x_lo, x_hi] for ``(a x^2 + b x + c) / (dd x + e)``."""
    cands = [x_lo, x_hi]
    qa, qb, qc = a * dd, 2 * a * e, b * e - c * dd
    if abs(qa) > 1e-18:
        disc = qb * qb - 4 * qa * qc
        if disc >= 0:
            r = math.sqrt(disc)
            cands += [(-qb - r) / (2 * qa), (-qb + r) / (2 * qa)]
    elif abs(qb) > 1e-18:
        cands.append(-qc / qb)
    cands = [x for x in cands if x_lo <= x <= x_hi]
    if integral:
        cands = sorted({float(min(max(f(x), x_lo), x_hi)) for x in cands
                        for f in (math.floor, math.ceil)})
    best_x, best_v = None, -math.inf
    for x in cands:
        den = dd * x + e
        if den <= 0:
            continue
        v = (a * x * x + b * x + c) / den
        if v > best_v:
            best_x, best_v = x, v
    return best_x, best_v


def _coordinate_ascent(M, movers, U, K, lo_idx, hi_idx, a, w, integral, max_sweeps=10_000):
    """Maximise the Gini of ``M`` by moving mass of each mover type between its
    endpoints; ``a[t]`` is the mass currently at the lower end."""
    a = a.astype(float).copy()
    M = M.copy()
    W = M.sum()
    for _ in range(max_sweeps):
        improved = False
        for t in movers:
            e = np.zeros(U.size)
            e[lo_idx[t]] += 1.0
            e[hi_idx[t]] -= 1.0
            KM = K @ M
            qa = 0.5 * float(e @ K @ e)
            qb = float(e @ KM)
            qc = 0.5 * float(M @ KM)
            dd = W * float(e @ U)
            ee = W * float(M @ U)
            cur = qc / ee if ee > 0 else -math.inf
            x, v = _line_best(qa, qb, qc, dd, ee, -a[t], w[t] - a[t], integral)
            if x is not None and v > cur + 1e-14 * max(1.0, abs(cur)):
                M += x * e
                a[t] += x
                improved = True
        if not improved:
            return M, a
    raise SubproblemNotConverged("coordinate ascent did not settle")


def gini_max_threshold(data, enumeration_budget: int = DEFAULT_BUDGET) -> BoundsResult:
    """Maximum over pivots ``u0``: intervals below the pivot go to their lower
    end, intervals above to their upper end, and the straddling intervals take
    the endpoint mix that maximises the Gini.  The mix is enumerated when it
    has at most ``2**enumeration_budget`` options, else found by coordinate
    ascent from the all-lower and all-upper starts."""
    d = _as_data(data)
    if not d.has_intervals:
        return _degenerate(d)
    if not d.is_integral:
        raise ValueError("threshold enumeration needs integer multiplicities; "
                         "use gini_max_continuous for fractional masses")
    U, K = _support(d)
    lat = build_lattice(d)
    lo_idx = np.searchsorted(U, d.lowers)
    hi_idx = np.searchsorted(U, d.uppers)
    m = d.type_weights.astype(np.int64)
    base_pts = _point_masses(d, U)
    seen = {}
    best = (-math.inf, None, None)
    exact = True
    for u0 in lat.U:
        below = d.uppers < u0
        above = d.lowers > u0
        strad = np.flatnonzero(~below & ~above & (m > 0))
        key = (tuple(np.flatnonzero(below)), tuple(strad))
        if key in seen:
            continue
        seen[key] = u0
        M0 = base_pts.copy()
        np.add.at(M0, lo_idx[below], m[below])
        np.add.at(M0, hi_idx[above], m[above])
        np.add.at(M0, hi_idx[strad], m[strad])  # straddlers start at upper
        options = float(np.prod((m[strad] + 1).astype(float)))
        if options <= 2.0 ** enumeration_budget:
            delta = np.zeros((strad.size, U.size))
            for r, t in enumerate(strad):
                delta[r, lo_idx[t]] += 1.0
                delta[r, hi_idx[t]] -= 1.0
            grids = [np.arange(m[t] + 1) for t in strad]
            total = int(options)
            chunk = 100_000
            it = itertools.product(*grids)
            for _ in range(0, total, chunk):
                combos = list(itertools.islice(it, chunk))
                Kc = np.array(combos, dtype=float).reshape(len(combos), strad.size)
                g = _batch_gini(M0 + Kc @ delta, U, K)
                if np.all(np.isnan(g)):
                    continue
                i = int(np.nanargmax(g))
                if g[i] > best[0] + 1e-15:
                    k = np.zeros(d.n_types)
                    k[below] = m[below]
                    k[strad] = Kc[i]
                    best = (float(g[i]), k, u0)
        else:
            exact = False
            for start in (m[strad], np.zeros(strad.size)):
                a0 = np.zeros(d.n_types)
                a0[strad] = start
                M = M0 + np.bincount(lo_idx[strad], start, U.size) - \
                    np.bincount(hi_idx[strad], start, U.size)
                M, a = _coordinate_ascent(M, strad, U, K, lo_idx, hi_idx, a0,
                                          m.astype(float), integral=True)
                g = _batch_gini(M[None, :], U, K)[0]
                if g > best[0] + 1e-15:
                    k = np.zeros(d.n_types)
                    k[below] = m[below]
                    k[strad] = a[strad]
                    best = (float(g), k, u0)
    diag = new_diagnostics(exact_enumeration=exact)
    if best[1] is None:
        diag["warnings"].append("every completion has zero mean; Gini set to 0")
        return BoundsResult("gini", "2", 0.0, 0.0, None, None, diag)
    diag["pivot"] = float(best[2])
    alloc = d.allocation(d.lowers, np.round(best[1]).astype(np.int64))
    return BoundsResult("gini", "2", best[0], best[0], None, alloc, diag)


def gini_max_continuous(data) -> BoundsResult:
    """Gini maximum when each interval type may split its mass between its
    endpoints in any proportion.

    The Gini is a concave quadratic over a positive linear form in the split
    masses, hence pseudo-concave on the box of splits; coordinatewise optimality
    is then global optimality.
    """
    d = _as_data(data)
    if not d.has_intervals:
        return _degenerate(d)
    U, K = _support(d)
    lo_idx = np.searchsorted(U, d.lowers)
    hi_idx = np.searchsorted(U, d.uppers)
    w = d.type_weights
    movers = np.flatnonzero(w > 0)
    best = (-math.inf, None)
    for frac in (1.0, 0.0):
        a0 = w * frac
        M = _point_masses(d, U)
        np.add.at(M, lo_idx, a0)
        np.add.at(M, hi_idx, w - a0)
        M, a = _coordinate_ascent(M, movers, U, K, lo_idx, hi_idx, a0, w, integral=False)
        g = _batch_gini(M[None, :], U, K)[0]
        if g > best[0]:
            best = (float(g), a)
    diag = new_diagnostics(exact_enumeration=True)
    diag["lower_mass"] = best[1].tolist()
    return BoundsResult("gini", "2", best[0], best[0], None, None, diag)


def gini_bounds_2(data, enumeration_budget: int = DEFAULT_BUDGET,
                  continuous: bool | None = None) -> BoundsResult:
    """Sharp Gini bounds through the threshold algorithms.

    ``continuous=True`` lets interval types split fractionally between their
    endpoints at the maximum (the population-level functional used by the
    bootstrap); the default does so only for fractional masses.
    """
    d = _as_data(data)
    if not d.has_intervals:
        return _degenerate(d)
    continuous = (not d.is_integral) if continuous is None else continuous
    lo = gini_min_threshold(d)
    hi = gini_max_continuous(d) if continuous else gini_max_threshold(d, enumeration_budget)
    diag = new_diagnostics(exact_enumeration=hi.diagnostics["exact_enumeration"])
    diag["warnings"] = lo.diagnostics["warnings"] + hi.diagnostics["warnings"]
    diag["pivot_min"] = lo.diagnostics.get("pivot")
    diag["pivot_max"] = hi.diagnostics.get("pivot")
    lat = build_lattice(d)
    alloc_vals = [] if lo.argmin is None else list(lo.argmin)
    if hi.argmax is not None:
        alloc_vals += list(hi.argmax)
    diag["distinct_values"] = int(np.unique(np.asarray(alloc_vals)).size) if alloc_vals else 0
    diag["lattice_size"] = int(lat.U.size)
    return BoundsResult("gini", "2", lo.lower, hi.upper, lo.argmin, hi.argmax, diag)


# --------------------------------------------------------------------------
# share-space path


class _SharePath:
    def __init__(self, system: ShareSystem):
        self.sys = system
        self.U = system.lattice.U
        self.K = distance_kernel(self.U)
        self.A_ub, self.b_ub, self.A_eq, self.b_eq, self.ub = system.polytope()
        self.free = ~system.outside
        self.unit = 1.0 / system.n

    def masses(self, phi):
        return self.sys.psi + phi

    def num(self, phi):
        m = self.masses(phi)
        return 0.5 * float(m @ self.K @ m)

    def den(self, phi):
        return float(self.masses(phi) @ self.U)

    def ratio(self, phi):
        return self.num(phi) / self.den(phi)

    def lp(self, c, sense, lb=None, ub=None):
        ub = self.ub if ub is None else np.minimum(self.ub, ub)
        lb = np.zeros(self.U.size) if lb is None else lb
        return solve_lp(LinearProgram(c, self.A_ub, self.b_ub, self.A_eq, self.b_eq,
                                      lb=lb, ub=ub, sense=sense))

    def feasible(self, phi, lb=None, ub=None, tol=1e-9):
        if not self.sys.feasible(phi, tol):
            return False
        if lb is not None and np.any(phi < lb - tol):
            return False
        if ub is not None and np.any(phi > ub + tol):
            return False
        return True

    # -- maximum over the polytope (concave parametric subproblem)

    def _starts(self, rng, lb, ub, extra):
        starts = [s for s in extra if s is not None]
        for _ in range(5):
            r = self.lp(rng.normal(size=self.U.size), "max", lb, ub)
            if r.optimal:
                starts.append(r.x)
        if len(starts) >= 2:
            starts.append(np.mean(starts, axis=0))
        return starts

    def maximise(self, objective, grad, lb=None, ub=None, extra_starts=(), seed=0, tol=1e-7):
        """Maximise a concave function over the (bounded) share polytope."""
        rng = np.random.default_rng(seed)
        lb_ = np.zeros(self.U.size) if lb is None else lb
        ub_ = self.ub if ub is None else np.minimum(self.ub, ub)
        bounds = [(l, None if np.isinf(u) else u) for l, u in zip(lb_, ub_)]
        cons = [
            {"type": "ineq", "fun": lambda x: self.b_ub - self.A_ub @ x,
             "jac": lambda x: -self.A_ub},
            {"type": "eq", "fun": lambda x: self.A_eq @ x - self.b_eq,
             "jac": lambda x: self.A_eq},
        ]
        best = None
        for x0 in self._starts(rng, lb_, ub_, extra_starts):
            res = minimize(lambda x: -objective(x), x0, jac=lambda x: -grad(x),
                           bounds=bounds, constraints=cons, method="SLSQP",
                           options={"ftol": 1e-14, "maxiter": 500})
            x = np.clip(res.x, lb_, ub_)
            if not self.feasible(x, lb, ub, tol=1e-7):
                continue
            if best is None or objective(x) > objective(best):
                best = x
        if best is None:
            raise SubproblemNotConverged("no restart produced a feasible point")
        # Frank-Wolfe certificate, with a few polishing steps if needed
        x = best
        for _ in range(100):
            g = grad(x)
            s = self.lp(g, "max", lb_, ub_)
            direction = s.x - x
            gap = float(g @ direction)
            if gap <= tol:
                return x, objective(x), gap
            # the objective is unimodal along the segment
            step = minimize_scalar(lambda a: -objective(x + a * direction), bounds=(0.0, 1.0),
                                   method="bounded", options={"xatol": 1e-12}).x
            x = x + step * direction
        raise SubproblemNotConverged(f"Frank-Wolfe gap stayed at {gap:.3g}")

    # -- minimum over the polytope (concave, attained at a vertex)

    def descend(self, objective, phi):
        """Unit-mass pair exchanges while they lower the objective."""
        u = self.unit
        phi = phi.copy()
        cur = objective(phi)
        idx = np.flatnonzero(self.free)
        while True:
            best = None
            for i in idx:
                if phi[i] < u - 1e-12:
                    continue
                for j in idx:
                    if i == j:
                        continue
                    cand = phi.copy()
                    cand[i] -= u
                    cand[j] += u
                    if not self.sys.feasible(cand):
                        continue
                    v = objective(cand)
                    if v < cur - 1e-14 and (best is None or v < best[0]):
                        best = (v, cand)
            if best is None:
                return phi, cur
            cur, phi = best


def _threshold_phi(d: IntervalData, system: ShareSystem, pivot: float, mode: str):
    U = system.lattice.U
    phi = np.zeros(U.size)
    if mode == "min":
        vals = np.clip(pivot, d.lowers, d.uppers)
        np.add.at(phi, np.searchsorted(U, vals), d.type_weights / system.n)
    return phi


def gini_bounds_2_shares(data, eps: float = DEFAULT_EPS, integral: bool = True,
                         seed: int = 0, max_nodes: int = 5000) -> BoundsResult:
    """Gini bounds by Dinkelbach bisection over the share polytope.

    The minimum is searched among polytope vertices by pair-exchange descent
    from the threshold allocations.  The maximum solves concave parametric
    subproblems, certified by the Frank-Wolfe gap.  With ``integral=True`` the
    maximum is restricted to shares that are multiples of ``1/n`` by branch and
    bound, which gives the sample-level bound; the continuous relaxation is
    reported in the diagnostics.
    """
    d = _as_data(data)
    if not d.has_intervals:
        return _degenerate(d)
    if not d.is_integral:
        raise ValueError("the share path needs integer multiplicities")
    system = build_share_system(d)
    sp = _SharePath(system)
    U, K = sp.U, sp.K
    mu_max = sp.lp(U, "max").value + float(system.psi @ U)
    if mu_max <= 0:
        raise NonPositiveMean("every completion has zero mean")

    # minimum
    starts = []
    for u0 in U:
        phi = _threshold_phi(d, system, u0, "min")
        if system.feasible(phi):
            starts.append(phi)

    def f_min(lam):
        h = lambda p: (sp.num(p) - lam * sp.den(p)) / mu_max
        best = None
        for s in starts:
            phi, v = sp.descend(h, s)
            if best is None or v < best[0]:
                best = (v, phi)
        return best

    lo_res = dinkelbach_bisect(DinkelbachOracle(f_min, "min", 0.0, 1.0, eps))

    # maximum, continuous
    thr = gini_max_threshold(d)
    warm = None
    if thr.argmax is not None:
        warm = np.zeros(U.size)
        for (kind, _), v in zip(d.obs, thr.argmax):
            if kind == "q":
                warm[np.searchsorted(U, v)] += 1.0 / system.n

    def parametric_max(lam, lb=None, ub=None):
        obj = lambda p: (sp.num(p) - lam * sp.den(p)) / mu_max
        grad = lambda p: (K @ sp.masses(p) - lam * U) / mu_max
        x, v, _ = sp.maximise(obj, grad, lb, ub, extra_starts=(warm,), seed=seed)
        return v, x

    hi_res = dinkelbach_bisect(DinkelbachOracle(lambda lam: parametric_max(lam), "max",
                                                0.0, 1.0, eps))

    def best_of(res, better):
        best = None
        for _, _, phi in res.trace:
            if phi is None or sp.den(phi) <= 0:
                continue
            g = sp.ratio(phi)
            if best is None or better(g, best[0]):
                best = (g, phi)
        return best

    lower, phi_lo = best_of(lo_res, lambda a, b: a < b)
    cont_upper, phi_hi = best_of(hi_res, lambda a, b: a > b)
    diag = new_diagnostics(iterations=lo_res.iterations + hi_res.iterations)
    diag["continuous_upper"] = cont_upper
    upper = cont_upper
    if integral:
        upper, phi_hi, nodes = _branch_and_bound(sp, system, thr, warm, seed, max_nodes)
        diag["nodes"] = nodes
    diag["threshold_gap_lower"] = abs(lower - gini_min_threshold(d).lower)
    diag["threshold_gap_upper"] = abs(upper - thr.upper)
    return BoundsResult("gini", "2", float(lower), float(upper),
                        sp.masses(phi_lo), sp.masses(phi_hi), diag)


def _ratio_max(sp: _SharePath, lb, ub, seed):
    """Continuous ratio maximum on a node; the ratio is pseudo-concave so a
    certified stationary point is global."""
    U, K = sp.U, sp.K

    def obj(p):
        D = sp.den(p)
        return sp.num(p) / D if D > 1e-15 else 0.0

    def grad(p):
        m = sp.masses(p)
        D = float(m @ U)
        if D <= 1e-15:
            return U.astype(float)  # push mass upwards off the zero-mean face
        return (K @ m * D - 0.5 * float(m @ K @ m) * U) / (D * D)

    x, v, _ = sp.maximise(obj, grad, lb, ub, seed=seed)
    return v, x


def _branch_and_bound(sp: _SharePath, system: ShareSystem, thr: BoundsResult, warm, seed,
                      max_nodes):
    n = system.n
    inc_val = thr.upper
    inc_phi = warm
    stack = [(np.zeros(sp.U.size), np.where(system.outside, 0.0, system.total))]
    nodes = 0
    while stack:
        lb, ub = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise SubproblemNotConverged(f"branch and bound exceeded {max_nodes} nodes")
        probe = sp.lp(np.zeros(sp.U.size), "max", lb, ub)
        if probe.status == INFEASIBLE:
            continue
        v, x = _ratio_max(sp, lb, ub, seed)
        if v <= inc_val + 1e-10:
            continue
        N = x * n
        frac = np.abs(N - np.round(N))
        if frac.max() <= 1e-7:
            phi = np.round(N) / n
            if sp.den(phi) > 0 and sp.ratio(phi) > inc_val:
                inc_val, inc_phi = sp.ratio(phi), phi
            continue
        j = int(np.argmax(frac))
        down_ub = ub.copy()
        down_ub[j] = math.floor(N[j]) / n
        up_lb = lb.copy()
        up_lb[j] = math.ceil(N[j]) / n
        stack.append((lb, down_ub))
        stack.append((up_lb, ub))
    return float(inc_val), inc_phi, nodes


def support_check(data, result: BoundsResult, tol: float = 1e-12) -> tuple[bool, bool]:
    """Whether the interval values of the argmin lie in U with at most one value
    outside B, and those of the argmax all lie in B."""
    d = _as_data(data)
    lat = build_lattice(d)
    q = np.array([kind == "q" for kind, _ in d.obs])

    def in_set(v, S):
        return np.min(np.abs(S - v)) <= tol if S.size else False

    ok_min = ok_max = True
    if result.argmin is not None and q.any():
        vals = np.asarray(result.argmin)[q]
        ok_min = all(in_set(v, lat.U) for v in vals)
        off_b = {float(v) for v in vals if not in_set(v, lat.B)}
        ok_min = ok_min and len(off_b) <= 1
    if result.argmax is not None and q.any():
        ok_max = all(in_set(v, lat.B) for v in np.asarray(result.argmax)[q])
    return bool(ok_min), bool(ok_max)
