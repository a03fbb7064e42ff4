"""Data model, exact index evaluation and imputation baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadGroupIndex,
    IndexOutOfRange,
    NonPositiveMean,
    NoPointData,
    OverlapError,
)

# absolute tolerance on mean-normalised quantities
TOL = 1e-9


@dataclass(frozen=True)
class IntervalObservation:
    """One unit's admissible range; a point datum when ``lower == upper``."""

    lower: float
    upper: float

    def __post_init__(self):
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise ValueError(f"interval endpoints must be finite: [{self.lower}, {self.upper}]")
        if self.lower > self.upper:
            raise ValueError(f"lower > upper in [{self.lower}, {self.upper}]")

    def is_point(self) -> bool:
        return self.lower == self.upper

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def intervals_from_pairs(pairs: Iterable[Sequence[float]]) -> list[IntervalObservation]:
    return [IntervalObservation(float(lo), float(hi)) for lo, hi in pairs]


@dataclass(frozen=True)
class GroupedTable:
    """Ordered, non-overlapping brackets with per-bracket counts.

    Counts are normally integers; the bootstrap builds tables with fractional
    counts, which only the share-based algorithms accept.  Adjacent brackets
    may touch (``upper_d == lower_{d+1}``) but not overlap.
    """

    brackets: tuple[tuple[float, float], ...]
    counts: tuple[float, ...]

    def __init__(self, brackets, counts):
        brackets = tuple((float(lo), float(hi)) for lo, hi in brackets)
        counts = tuple(float(c) for c in counts)
        if len(brackets) != len(counts):
            raise ValueError("brackets and counts differ in length")
        if len(brackets) < 2:
            raise ValueError("a grouped table needs at least two brackets")
        for d, (lo, hi) in enumerate(brackets):
            if not (math.isfinite(lo) and math.isfinite(hi)):
                raise ValueError(f"bracket {d + 1} has a non-finite endpoint")
            if lo > hi:
                raise ValueError(f"bracket {d + 1} has lower > upper")
        for d in range(len(brackets) - 1):
            if brackets[d][1] > brackets[d + 1][0]:
                raise OverlapError(f"brackets {d + 1} and {d + 2} overlap")
        if any(c < 0 or not math.isfinite(c) for c in counts):
            raise ValueError("counts must be finite and non-negative")
        if sum(counts) <= 0:
            raise ValueError("total count must be positive")
        object.__setattr__(self, "brackets", brackets)
        object.__setattr__(self, "counts", counts)

    @property
    def D(self) -> int:
        return len(self.brackets)

    @property
    def lowers(self) -> np.ndarray:
        return np.array([b[0] for b in self.brackets])

    @property
    def uppers(self) -> np.ndarray:
        return np.array([b[1] for b in self.brackets])

    @property
    def count_array(self) -> np.ndarray:
        return np.array(self.counts)

    @property
    def total(self) -> float:
        return float(sum(self.counts))

    @property
    def shares(self) -> np.ndarray:
        c = self.count_array
        return c / c.sum()

    @property
    def is_integral(self) -> bool:
        return all(float(c).is_integer() for c in self.counts)

    @property
    def int_counts(self) -> np.ndarray:
        if not self.is_integral:
            raise ValueError("this operation needs integer counts")
        return np.array(self.counts, dtype=np.int64)

    @property
    def n(self) -> int:
        return int(self.int_counts.sum())

    def group_slice(self, d: int) -> slice:
        """Sorted positions (0-based slice) of 1-based group ``d``."""
        if not 1 <= d <= self.D:
            raise BadGroupIndex(f"group index {d} outside 1..{self.D}")
        ends = np.cumsum(self.int_counts)
        start = int(ends[d - 2]) if d > 1 else 0
        return slice(start, int(ends[d - 1]))

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-position lower/upper bounds of the expanded sorted sample."""
        c = self.int_counts
        return np.repeat(self.lowers, c), np.repeat(self.uppers, c)

    def expand(self, p: Sequence[float]) -> np.ndarray:
        """Corner sample: ``round(p_d n_d)`` members of group d at its lower end."""
        out = []
        for (lo, hi), c, pd in zip(self.brackets, self.int_counts, p):
            k = int(round(pd * c))
            out.extend([lo] * k + [hi] * (int(c) - k))
        return np.array(out, dtype=float)

    def with_counts(self, counts) -> "GroupedTable":
        return GroupedTable(self.brackets, counts)

    def scaled_down(self, target_n: int) -> "GroupedTable":
        """Aggregate members so the expanded sample has about ``target_n`` units.

        Dividing by the gcd of the counts is exact for replication-invariant
        indices; beyond that the counts are rounded proportionally (largest
        remainder), keeping every non-empty group non-empty.
        """
        c = self.int_counts
        g = np.gcd.reduce(c[c > 0])
        c = c // g
        if c.sum() <= target_n:
            return self.with_counts(c)
        raw = c * (target_n / c.sum())
        base = np.floor(raw).astype(np.int64)
        base[(c > 0) & (base == 0)] = 1
        short = target_n - base.sum()
        if short > 0:
            order = np.argsort(-(raw - base), kind="stable")
            base[order[:short]] += 1
        return self.with_counts(base)


@dataclass(frozen=True)
class SortedSample:
    values: np.ndarray

    def __init__(self, values):
        v = np.sort(np.asarray(values, dtype=float).ravel())
        if v.size == 0:
            raise ValueError("empty sample")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.values.size

    @property
    def mean(self) -> float:
        return float(self.values.mean())


def _sorted(sample) -> np.ndarray:
    if isinstance(sample, SortedSample):
        return sample.values
    v = np.sort(np.asarray(sample, dtype=float).ravel())
    if v.size == 0:
        raise ValueError("empty sample")
    return v


# --------------------------------------------------------------------------
# index evaluation


def gini(sample) -> float:
    """Gini coefficient ``sum((2i - n - 1) y_i) / (n^2 * mean)`` of the sorted sample."""
    y = _sorted(sample)
    n = y.size
    total = y.sum()
    if total <= 0:
        raise NonPositiveMean("Gini needs a positive mean")
    ranks = 2.0 * np.arange(1, n + 1) - n - 1
    return float(ranks @ y / (n * total))


def weighted_gini(values, weights) -> float:
    """Gini of a discrete distribution with the given (unnormalised) masses."""
    y = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(y, kind="stable")
    y, w = y[order], w[order]
    W = w.sum()
    mu = w @ y
    if mu <= 0 or W <= 0:
        raise NonPositiveMean("Gini needs a positive mean")
    # sum_{i<j} w_i w_j (y_j - y_i)
    cw = np.cumsum(w) - w
    cwy = np.cumsum(w * y) - w * y
    pair = float(w @ (y * cw - cwy))
    return pair / (W * mu)


def quantile_position(tau: float, n: int) -> int:
    """1-based order-statistic position ``floor(tau * n)``."""
    # guard against 0.29 * 100 = 28.999999999999996
    return int(math.floor(tau * n + 1e-9))


def quantile_ratio(sample, tau1: float, tau2: float) -> float:
    """``y_(floor(tau2 n)) / y_(floor(tau1 n))``.

    Returns ``inf`` for a zero denominator with a positive numerator and 1 when
    both order statistics are zero.
    """
    if not 0 < tau1 < tau2 < 1:
        raise ValueError("need 0 < tau1 < tau2 < 1")
    y = _sorted(sample)
    k1 = quantile_position(tau1, y.size)
    k2 = quantile_position(tau2, y.size)
    if k1 < 1:
        raise IndexOutOfRange(f"floor(tau1 * n) = {k1} < 1 for n = {y.size}")
    num, den = y[k2 - 1], y[k1 - 1]
    if den == 0:
        return 1.0 if num == 0 else math.inf
    return float(num / den)


def hoover(sample) -> float:
    """Hoover index ``sum|y_i - mean| / (2 n mean)``."""
    y = _sorted(sample)
    mu = y.mean()
    if mu <= 0:
        raise NonPositiveMean("Hoover index needs a positive mean")
    return float(np.abs(y - mu).sum() / (2 * y.size * mu))


@dataclass(frozen=True)
class IndexSpec:
    kind: str  # "gini" | "qratio" | "hoover"
    tau1: float | None = None
    tau2: float | None = None

    def __post_init__(self):
        if self.kind not in ("gini", "qratio", "hoover"):
            raise ValueError(f"unknown index kind {self.kind!r}")
        if self.kind == "qratio":
            if self.tau1 is None or self.tau2 is None or not 0 < self.tau1 < self.tau2 < 1:
                raise ValueError("quantile ratio needs 0 < tau1 < tau2 < 1")

    @classmethod
    def gini(cls):
        return cls("gini")

    @classmethod
    def hoover(cls):
        return cls("hoover")

    @classmethod
    def quantile_ratio(cls, tau1, tau2):
        return cls("qratio", tau1, tau2)

    @property
    def name(self) -> str:
        if self.kind == "qratio":
            return f"qratio({self.tau1:g},{self.tau2:g})"
        return self.kind

    def __call__(self, sample) -> float:
        if self.kind == "gini":
            return gini(sample)
        if self.kind == "hoover":
            return hoover(sample)
        return quantile_ratio(sample, self.tau1, self.tau2)

    def coefficients(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Numerator/denominator vectors over the sorted sample (Gini, quantile ratio)."""
        if self.kind == "gini":
            return 2.0 * np.arange(1, n + 1) - n - 1, np.full(n, float(n))
        if self.kind == "qratio":
            k1 = quantile_position(self.tau1, n)
            k2 = quantile_position(self.tau2, n)
            if k1 < 1:
                raise IndexOutOfRange(f"floor(tau1 * n) = {k1} < 1 for n = {n}")
            r1, r2 = np.zeros(n), np.zeros(n)
            r1[k2 - 1] = 1.0
            r2[k1 - 1] = 1.0
            return r1, r2
        raise ValueError("the Hoover index is not linear-fractional")


# --------------------------------------------------------------------------
# linear side information


class ConstraintRow:
    """A linear restriction on the sorted latent vector: ``coef @ y (rel) rhs``."""

    def linear(self, table: GroupedTable) -> tuple[np.ndarray, float]:
        raise NotImplementedError

    def groups(self, table: GroupedTable) -> set[int]:
        coef, _ = self.linear(table)
        nz = np.flatnonzero(np.abs(coef) > 0)
        ends = np.cumsum(table.int_counts)
        return {int(np.searchsorted(ends, i, side="right")) + 1 for i in nz}

    def with_value(self, value: float) -> "ConstraintRow":
        raise NotImplementedError


@dataclass(frozen=True)
class TotalMean(ConstraintRow):
    value: float

    def linear(self, table):
        n = table.n
        return np.full(n, 1.0 / n), float(self.value)

    def with_value(self, value):
        return TotalMean(value)


@dataclass(frozen=True)
class GroupMean(ConstraintRow):
    group: int  # 1-based
    value: float

    def linear(self, table):
        sl = table.group_slice(self.group)
        coef = np.zeros(table.n)
        size = sl.stop - sl.start
        if size == 0:
            raise BadGroupIndex(f"group {self.group} is empty")
        coef[sl] = 1.0 / size
        return coef, float(self.value)

    def with_value(self, value):
        return GroupMean(self.group, value)


@dataclass(frozen=True)
class LorenzPoint(ConstraintRow):
    """Known Lorenz ordinate ``share`` after the first ``h`` groups.

    ``sum_{j<=h} s_j mean_j - share * mean = 0`` is linear in y.
    """

    h: int
    value: float

    def linear(self, table):
        if not 1 <= self.h < table.D:
            raise BadGroupIndex(f"Lorenz point index {self.h} outside 1..{table.D - 1}")
        n = table.n
        coef = np.full(n, -self.value / n)
        coef[: table.group_slice(self.h).stop] += 1.0 / n
        return coef, 0.0

    def with_value(self, value):
        return LorenzPoint(self.h, value)


@dataclass(frozen=True)
class RawRow(ConstraintRow):
    coefficients: tuple[float, ...]
    rhs: float

    def __init__(self, coefficients, rhs):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in coefficients))
        object.__setattr__(self, "rhs", float(rhs))

    @property
    def value(self):
        return self.rhs

    def linear(self, table):
        if len(self.coefficients) != table.n:
            raise ValueError(
                f"raw row has {len(self.coefficients)} coefficients, sample has {table.n}"
            )
        return np.array(self.coefficients), self.rhs

    def with_value(self, value):
        return RawRow(self.coefficients, value)


@dataclass(frozen=True)
class Negated(ConstraintRow):
    """``row >= value`` rewritten as ``-row <= -value``."""

    row: ConstraintRow

    @property
    def value(self):
        return self.row.value

    def linear(self, table):
        coef, rhs = self.row.linear(table)
        return -coef, -rhs

    def with_value(self, value):
        return Negated(self.row.with_value(value))


@dataclass
class ConstraintSet:
    equality_rows: list[ConstraintRow] = field(default_factory=list)
    inequality_rows: list[ConstraintRow] = field(default_factory=list)

    def add(self, row: ConstraintRow, relation: str = "eq") -> "ConstraintSet":
        if relation == "eq":
            self.equality_rows.append(row)
        elif relation == "le":
            self.inequality_rows.append(row)
        elif relation == "ge":
            self.inequality_rows.append(Negated(row))
        else:
            raise ValueError(f"unknown relation {relation!r}")
        return self

    def __len__(self):
        return len(self.equality_rows) + len(self.inequality_rows)

    @property
    def q1(self) -> int:
        return len(self.equality_rows)

    @property
    def q2(self) -> int:
        return len(self.inequality_rows)

    def matrices(self, table: GroupedTable):
        """``(A_eq, b_eq, A_ub, b_ub)`` over the expanded sorted sample."""
        n = table.n

        def stack(rows):
            if not rows:
                return np.zeros((0, n)), np.zeros(0)
            pairs = [r.linear(table) for r in rows]
            return np.vstack([p[0] for p in pairs]), np.array([p[1] for p in pairs])

        A_eq, b_eq = stack(self.equality_rows)
        A_ub, b_ub = stack(self.inequality_rows)
        return A_eq, b_eq, A_ub, b_ub

    def check_group_means(self, table: GroupedTable) -> None:
        from .errors import InfeasibleConstraints

        for row in self.equality_rows:
            if isinstance(row, GroupMean):
                lo, hi = table.brackets[row.group - 1]
                if not lo - TOL * max(1.0, abs(lo)) <= row.value <= hi + TOL * max(1.0, abs(hi)):
                    raise InfeasibleConstraints(
                        f"group {row.group} mean {row.value} outside its bracket [{lo}, {hi}]"
                    )

    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.equality_rows + self.inequality_rows], dtype=float)

    def with_values(self, values) -> "ConstraintSet":
        values = list(values)
        q1 = self.q1
        return ConstraintSet(
            [r.with_value(v) for r, v in zip(self.equality_rows, values[:q1])],
            [r.with_value(v) for r, v in zip(self.inequality_rows, values[q1:])],
        )


# --------------------------------------------------------------------------
# results


@dataclass
class BoundsResult:
    index: str
    scenario: str
    lower: float
    upper: float
    argmin: np.ndarray | None = None
    argmax: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, tol: float = 1e-9) -> bool:
        return self.lower - tol <= value <= self.upper + tol


def new_diagnostics(**extra) -> dict:
    d = {"iterations": 0, "exact_enumeration": True, "distinct_values": None, "warnings": []}
    d.update(extra)
    return d


# --------------------------------------------------------------------------
# imputation baselines

BASELINE_METHODS = ("drop", "mean_impute", "midpoint_impute", "hotdeck", "hotdeck_multi")


def split_points(data: Sequence[IntervalObservation]):
    points = np.array([o.lower for o in data if o.is_point()], dtype=float)
    intervals = [o for o in data if not o.is_point()]
    return points, intervals


def _hotdeck_draw(points, intervals, rng):
    imputed = np.empty(len(intervals))
    fallbacks = 0
    for j, o in enumerate(intervals):
        donors = points[(points >= o.lower) & (points <= o.upper)]
        if donors.size == 0:
            donors = points
            fallbacks += 1
        imputed[j] = donors[rng.integers(donors.size)]
    return imputed, fallbacks


def baseline_gini(data: Sequence[IntervalObservation], method: str = "midpoint_impute",
                  seed: int | None = None, m: int = 10) -> tuple[float, dict]:
    """Point estimate of the Gini under a conventional missing-data treatment."""
    if method not in BASELINE_METHODS:
        raise ValueError(f"unknown baseline method {method!r}")
    points, intervals = split_points(data)
    meta = {"method": method, "n_points": int(points.size), "n_intervals": len(intervals),
            "n_fallback": 0}
    if not intervals:
        if method != "drop" and points.size == 0:
            raise NoPointData("no observations")
        return gini(points), meta
    if method == "midpoint_impute":
        filled = np.array([(o.lower + o.upper) / 2 for o in intervals])
        return gini(np.concatenate([points, filled])), meta
    if points.size == 0:
        raise NoPointData(f"{method} needs at least one point observation")
    if method == "drop":
        return gini(points), meta
    if method == "mean_impute":
        overall = points.mean()
        filled = np.empty(len(intervals))
        for j, o in enumerate(intervals):
            inside = points[(points >= o.lower) & (points <= o.upper)]
            if inside.size:
                filled[j] = inside.mean()
            else:
                filled[j] = overall
                meta["n_fallback"] += 1
        return gini(np.concatenate([points, filled])), meta
    rng = np.random.default_rng(seed)
    if method == "hotdeck":
        filled, fb = _hotdeck_draw(points, intervals, rng)
        meta["n_fallback"] = fb
        meta["imputed"] = filled.tolist()
        return gini(np.concatenate([points, filled])), meta
    ginis = []
    for _ in range(m):
        filled, fb = _hotdeck_draw(points, intervals, rng)
        ginis.append(gini(np.concatenate([points, filled])))
    meta["n_fallback"] = fb
    meta["m"] = m
    meta["draws"] = ginis
    return float(np.mean(ginis)), meta
