"""Brute-force bounds on small instances by exhaustive enumeration.

Every unknown value is drawn from its endpoints plus an interior grid; for
interval micro data the point values and endpoints of other intervals that fall
inside an interval are candidates too.  With
side information, candidates where one tied block of a group sits at the value
that makes a constraint row tight are added as well.  These are the vertices
of the feasible polytope when there is a single active row.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .core import (
    BoundsResult,
    ConstraintSet,
    GroupedTable,
    IndexSpec,
    IntervalObservation,
    new_diagnostics,
    quantile_position,
)
from .errors import IndexOutOfRange, NoFeasibleAssignment, TooLarge

CHUNK = 200_000
FILTER_TOL = 1e-9


@dataclass(frozen=True)
class OracleConfig:
    max_n: int = 8
    interior_grid_steps: int = 8
    index: IndexSpec = IndexSpec("gini")

    def __post_init__(self):
        if self.max_n > 10:
            raise TooLarge("max_n above 10 is not supported")
        if self.interior_grid_steps < 1:
            raise ValueError("interior_grid_steps must be at least 1")


def candidate_values(lo: float, hi: float, steps: int, lattice=None) -> np.ndarray:
    """Endpoints, interior grid and any lattice values inside ``[lo, hi]``."""
    if lo == hi:
        return np.array([lo])
    parts = [[lo, hi], lo + (hi - lo) * np.arange(1, steps) / steps]
    if lattice is not None:
        lattice = np.asarray(lattice, dtype=float)
        parts.append(lattice[(lattice >= lo) & (lattice <= hi)])
    return np.unique(np.concatenate(parts))


def batch_index(index: IndexSpec, Y: np.ndarray) -> np.ndarray:
    """Index of each row of ``Y`` (rows sorted ascending); NaN where undefined."""
    n = Y.shape[1]
    total = Y.sum(axis=1)
    out = np.full(Y.shape[0], np.nan)
    if index.kind == "qratio":
        k1 = quantile_position(index.tau1, n)
        k2 = quantile_position(index.tau2, n)
        if k1 < 1:
            raise IndexOutOfRange(f"floor(tau1 * n) = {k1} < 1 for n = {n}")
        num, den = Y[:, k2 - 1], Y[:, k1 - 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(den != 0, num / np.where(den != 0, den, 1.0),
                           np.where(num == 0, 1.0, np.inf))
        return out
    ok = total > 0
    if index.kind == "gini":
        ranks = 2.0 * np.arange(1, n + 1) - n - 1
        out[ok] = (Y[ok] @ ranks) / (n * total[ok])
    else:
        mu = total[ok] / n
        out[ok] = np.abs(Y[ok] - mu[:, None]).sum(axis=1) / (2 * n * mu)
    return out


class _Tracker:
    def __init__(self):
        self.lo = (np.inf, None)
        self.hi = (-np.inf, None)
        self.count = 0

    def update(self, Y, vals):
        good = ~np.isnan(vals)
        if not np.any(good):
            return
        Y, vals = Y[good], vals[good]
        self.count += vals.size
        i, j = int(np.argmin(vals)), int(np.argmax(vals))
        if vals[i] < self.lo[0]:
            self.lo = (float(vals[i]), Y[i].copy())
        if vals[j] > self.hi[0]:
            self.hi = (float(vals[j]), Y[j].copy())


def _multisets(values: np.ndarray, size: int) -> np.ndarray:
    if size == 0:
        return np.zeros((1, 0))
    idx = np.array(list(itertools.combinations_with_replacement(range(values.size), size)))
    return values[idx]


def _product_rows(blocks: list[np.ndarray]):
    """Yield chunks of the row-wise Cartesian product of the blocks (concatenated)."""
    sizes = [b.shape[0] for b in blocks]
    total = int(np.prod(sizes))
    for start in range(0, total, CHUNK):
        flat = np.arange(start, min(start + CHUNK, total))
        idx = np.unravel_index(flat, sizes)
        yield np.hstack([b[i] for b, i in zip(blocks, idx)])


def _feasible(Y, mats):
    A_eq, b_eq, A_ub, b_ub = mats
    ok = np.ones(Y.shape[0], dtype=bool)
    if A_eq.size:
        scale = 1.0 + np.abs(b_eq)
        ok &= np.all(np.abs(Y @ A_eq.T - b_eq) <= FILTER_TOL * scale, axis=1)
    if A_ub.size:
        scale = 1.0 + np.abs(b_ub)
        ok &= np.all(Y @ A_ub.T - b_ub <= FILTER_TOL * scale, axis=1)
    return ok


def _tight_block_candidates(table: GroupedTable, mats) -> np.ndarray:
    """Endpoint patterns with one tied block solved to make a row tight."""
    A_eq, b_eq, A_ub, b_ub = mats
    rows = [(A_eq[i], b_eq[i]) for i in range(A_eq.shape[0])]
    rows += [(A_ub[i], b_ub[i]) for i in range(A_ub.shape[0])]
    if not rows:
        return np.zeros((0, table.n))
    counts = table.int_counts
    pattern_blocks = []
    for (lo, hi), c in zip(table.brackets, counts):
        pattern_blocks.append(np.array([[lo] * k + [hi] * (c - k) for k in range(c + 1)],
                                       dtype=float).reshape(c + 1, c))
    bases = np.vstack(list(_product_rows(pattern_blocks)))
    out = []
    starts = np.concatenate([[0], np.cumsum(counts)])
    for d in range(table.D):
        lo, hi = table.brackets[d]
        if lo == hi:
            continue
        s0, c = int(starts[d]), int(counts[d])
        for a in range(c):
            for b in range(1, c - a + 1):
                blk = slice(s0 + a, s0 + a + b)
                Yb = bases.copy()
                Yb[:, s0:s0 + a] = lo
                Yb[:, s0 + a + b:s0 + c] = hi
                for coef, rhs in rows:
                    w = coef[blk].sum()
                    if abs(w) < 1e-15:
                        continue
                    Yb[:, blk] = 0.0
                    v = (rhs - Yb @ coef) / w
                    keep = (v >= lo - 1e-12) & (v <= hi + 1e-12)
                    if np.any(keep):
                        Yk = Yb[keep].copy()
                        Yk[:, blk] = np.clip(v[keep], lo, hi)[:, None]
                        out.append(Yk)
    if not out:
        return np.zeros((0, table.n))
    return np.unique(np.vstack(out), axis=0)


def brute_force_table(table: GroupedTable, index: IndexSpec | None = None,
                      constraints: ConstraintSet | None = None,
                      config: OracleConfig = OracleConfig()) -> BoundsResult:
    index = index or config.index
    n = table.n
    if n > config.max_n:
        raise TooLarge(f"expanded sample has {n} units, limit {config.max_n}")
    constraints = constraints or ConstraintSet()
    mats = constraints.matrices(table) if len(constraints) else None
    blocks = [_multisets(candidate_values(lo, hi, config.interior_grid_steps), int(c))
              for (lo, hi), c in zip(table.brackets, table.int_counts)]
    tr = _Tracker()
    for Y in _product_rows(blocks):
        if mats is not None:
            Y = Y[_feasible(Y, mats)]
        if Y.shape[0]:
            tr.update(Y, batch_index(index, Y))
    if mats is not None:
        Y = _tight_block_candidates(table, mats)
        if Y.shape[0]:
            Y = Y[_feasible(Y, mats)]
            tr.update(Y, batch_index(index, Y))
    if tr.count == 0:
        raise NoFeasibleAssignment("no enumerated assignment satisfies the constraints")
    diag = new_diagnostics(candidates=tr.count)
    scenario = "1B" if len(constraints) else "1A"
    return BoundsResult(index.kind, scenario, tr.lo[0], tr.hi[0], tr.lo[1], tr.hi[1], diag)


def brute_force_intervals(data, index: IndexSpec | None = None,
                          config: OracleConfig = OracleConfig()) -> BoundsResult:
    index = index or config.index
    data = list(data)
    if len(data) > config.max_n:
        raise TooLarge(f"sample has {len(data)} units, limit {config.max_n}")
    points = np.array([o.lower for o in data if o.is_point()], dtype=float)
    types: dict[tuple[float, float], int] = {}
    for o in data:
        if not o.is_point():
            types[(o.lower, o.upper)] = types.get((o.lower, o.upper), 0) + 1
    # completions extremal for the Gini take values among endpoints and point values
    lattice = np.unique(np.concatenate([points, [v for key in types for v in key]]))
    blocks = [_multisets(candidate_values(lo, hi, config.interior_grid_steps, lattice), m)
              for (lo, hi), m in types.items()]
    blocks.append(points[None, :])
    tr = _Tracker()
    for Y in _product_rows(blocks):
        Y = np.sort(Y, axis=1)
        tr.update(Y, batch_index(index, Y))
    if tr.count == 0:
        raise NoFeasibleAssignment("every completion has a zero mean")
    return BoundsResult(index.kind, "2", tr.lo[0], tr.hi[0], tr.lo[1], tr.hi[1],
                        new_diagnostics(candidates=tr.count))


def brute_force_bounds(data_or_table, config: OracleConfig = OracleConfig(),
                       constraints: ConstraintSet | None = None,
                       index: IndexSpec | None = None) -> BoundsResult:
    """Exact min/max of the index over the enumerated candidate completions."""
    if isinstance(data_or_table, GroupedTable):
        return brute_force_table(data_or_table, index, constraints, config)
    if constraints is not None and len(constraints):
        raise ValueError("side information is only supported for grouped tables")
    data = [o if isinstance(o, IntervalObservation) else IntervalObservation(*o)
            for o in data_or_table]
    return brute_force_intervals(data, index, config)
