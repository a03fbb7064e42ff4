"""Numerical delta-method bootstrap for bound endpoints.

For each replicate the empirical input ``theta`` is moved to
``theta + t_n sqrt(n) (theta* - theta)``, where ``theta*`` is the bootstrap
draw and ``t_n = n^-alpha``.  The bounds are recomputed there and
``S* = (V(perturbed) - V(theta)) / t_n`` approximates the limit law of
``sqrt(n) (V_hat - V)``.  The endpoints are directionally differentiable but
not smooth in general, so this replaces the ordinary bootstrap.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.stats import norm

from .core import BoundsResult, ConstraintSet, GroupedTable, IndexSpec
from .errors import (
    InfeasibleConstraints,
    NonPositiveMean,
    QuantileOnBoundary,
    ResampleInfeasible,
)
from .scenario1 import bounds_1b, gini_bounds_1a, hoover_bounds, quantile_ratio_bounds_1a
from .scenario2 import IntervalData, gini_bounds_2


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 1000
    seed: int | None = None
    alpha: float = 0.25
    level: float = 0.95
    ci_method: str = "normal"
    jitter: bool = False
    workers: int = 1
    max_attempt_factor: int = 10

    def __post_init__(self):
        if not 0 < self.alpha < 0.5:
            raise ValueError("alpha must lie in (0, 0.5) so that t_n -> 0 and t_n sqrt(n) -> inf")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if self.replicates < 2:
            raise ValueError("need at least two replicates")
        if self.ci_method not in ("normal", "percentile"):
            raise ValueError("ci_method must be 'normal' or 'percentile'")

    def t_n(self, n: float) -> float:
        return float(n) ** -self.alpha


@dataclass
class BootstrapResult:
    lower: float
    upper: float
    se_lower: float
    se_upper: float
    se_width: float
    ci_lower: tuple[float, float]
    ci_upper: tuple[float, float]
    ci_lower_percentile: tuple[float, float]
    ci_upper_percentile: tuple[float, float]
    draws_min: np.ndarray
    draws_max: np.ndarray
    n: float
    t_n: float
    level: float
    attempts: int
    failures: int
    warnings: list = field(default_factory=list)

    @property
    def failure_rate(self) -> float:
        return self.failures / self.attempts if self.attempts else 0.0

    def selected_ci(self, method: str):
        if method == "percentile":
            return self.ci_lower_percentile, self.ci_upper_percentile
        return self.ci_lower, self.ci_upper


# --------------------------------------------------------------------------
# value maps


def largest_remainder(x: np.ndarray, total: int) -> np.ndarray:
    """Non-negative integers summing to ``total`` closest to ``x * total / sum(x)``."""
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    raw = x * (total / x.sum())
    base = np.floor(raw).astype(np.int64)
    short = total - int(base.sum())
    if short > 0:
        order = np.argsort(-(raw - base), kind="stable")
        base[order[:short]] += 1
    return base


def _clip_renormalise(w: np.ndarray, total: float) -> np.ndarray:
    w = np.maximum(w, 0.0)
    s = w.sum()
    if s <= 0:
        raise ResampleInfeasible("perturbed masses vanished")
    return w * (total / s)


class _GroupedProblem:
    """Scenario 1: theta = (group shares, constraint values)."""

    def __init__(self, table: GroupedTable, index: IndexSpec,
                 constraints: ConstraintSet | None, resampler: Callable | None):
        self.table = table
        self.index = index
        self.constraints = constraints if constraints is not None and len(constraints) else None
        self.resampler = resampler
        self.n = table.total
        self.shares = table.shares
        self.c_hat = self.constraints.values() if self.constraints is not None else None
        # closed forms depend on the table through its shares only
        self.share_based = self.constraints is None and index.kind in ("gini", "qratio")

    def value(self, shares, cvals=None) -> tuple[float, float]:
        if self.share_based:
            t = self.table.with_counts(shares * self.n)
            if self.index.kind == "gini":
                r = gini_bounds_1a(t, grid=False)
            else:
                r = quantile_ratio_bounds_1a(t, self.index.tau1, self.index.tau2)
            return r.lower, r.upper
        counts = largest_remainder(shares, int(round(self.n)))
        t = self.table.with_counts(counts)
        cons = self.constraints
        if cons is not None and cvals is not None:
            cons = cons.with_values(cvals)
        if self.index.kind == "hoover":
            r = hoover_bounds(t, cons)
        else:
            r = bounds_1b(self.index, t, cons)
        return r.lower, r.upper

    def base(self):
        return self.value(self.shares, self.c_hat)

    def draw(self, rng, scale, jitter):
        counts = rng.multinomial(int(round(self.n)), self.shares)
        star = counts / counts.sum()
        shares = _clip_renormalise(self.shares + scale * (star - self.shares), 1.0)
        cvals = None
        if self.c_hat is not None:
            cvals = self.c_hat.copy()
            if self.resampler is not None:
                c_star = np.asarray(self.resampler(rng, counts), dtype=float)
                cvals = self.c_hat + scale * (c_star - self.c_hat)
            if jitter:
                cvals = cvals + self.n ** -0.75 * rng.uniform(-1, 1, size=cvals.size)
        return self.value(shares, cvals)


class _IntervalProblem:
    """Scenario 2: theta = masses of the point values and interval types."""

    def __init__(self, data: IntervalData, index: IndexSpec):
        if index.kind != "gini":
            raise ValueError("interval micro data bounds are available for the Gini only")
        self.data = data
        self.n = data.total
        self.w_hat = np.concatenate([data.point_weights, data.type_weights])
        # observation -> position in the mass vector
        n_p = data.point_values.size
        self.obs_slot = np.array([j if kind == "p" else n_p + j for kind, j in data.obs])
        self.split = n_p

    def value(self, w):
        d = self.data.with_weights(w[: self.split], w[self.split:])
        r = gini_bounds_2(d, continuous=True)
        return r.lower, r.upper

    def base(self):
        return self.value(self.w_hat)

    def draw(self, rng, scale, jitter):
        idx = rng.integers(0, self.obs_slot.size, size=self.obs_slot.size)
        w_star = np.bincount(self.obs_slot[idx], minlength=self.w_hat.size).astype(float)
        w = _clip_renormalise(self.w_hat + scale * (w_star - self.w_hat), self.n)
        return self.value(w)


_RECOVERABLE = (InfeasibleConstraints, ResampleInfeasible, QuantileOnBoundary, NonPositiveMean)


def _replicate(problem, child: np.random.SeedSequence, scale, jitter, max_tries):
    rng = np.random.default_rng(child)
    failures = 0
    for _ in range(max_tries):
        try:
            return problem.draw(rng, scale, jitter), failures
        except _RECOVERABLE:
            failures += 1
    return None, failures


def bootstrap_bounds(data, index: IndexSpec = IndexSpec("gini"), scenario: str | None = None,
                     config: BootstrapConfig = BootstrapConfig(),
                     constraints: ConstraintSet | None = None,
                     constraint_resampler: Callable | None = None) -> BootstrapResult:
    """Bootstrap standard errors and confidence intervals for both endpoints.

    ``data`` is a :class:`GroupedTable` (scenario "1") or interval micro data
    (scenario "2").  For grouped tables without side information the Gini and
    quantile-ratio bounds are evaluated on the share-level relaxation so that
    the value map is defined at fractional perturbed counts.
    ``constraint_resampler(rng, counts)`` returns bootstrap draws of estimated
    constraint values; without it constraint values are held fixed.
    """
    if scenario is None:
        scenario = "1" if isinstance(data, GroupedTable) else "2"
    if scenario.startswith("1"):
        if not isinstance(data, GroupedTable):
            raise ValueError("scenario 1 needs a grouped table")
        problem = _GroupedProblem(data, index, constraints, constraint_resampler)
    elif scenario == "2":
        d = data if isinstance(data, IntervalData) else IntervalData.from_observations(data)
        problem = _IntervalProblem(d, index)
    else:
        raise ValueError(f"unknown scenario {scenario!r}")

    n = problem.n
    t_n = config.t_n(n)
    scale = t_n * math.sqrt(n)
    v_lo, v_hi = problem.base()

    B = config.replicates
    root = config.seed if isinstance(config.seed, np.random.SeedSequence) \
        else np.random.SeedSequence(config.seed)
    children = root.spawn(B)
    max_tries = config.max_attempt_factor * B
    tasks = [(problem, c, scale, config.jitter, max_tries) for c in children]
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outs = list(pool.map(lambda a: _replicate(*a), tasks))
    else:
        outs = [_replicate(*a) for a in tasks]

    failures = sum(f for _, f in outs)
    attempts = failures + sum(1 for v, _ in outs if v is not None)
    if failures > max_tries or any(v is None for v, _ in outs):
        raise ResampleInfeasible(
            f"{failures} of {attempts} perturbed inputs were infeasible (cap {max_tries})")
    vals = np.array([v for v, _ in outs], dtype=float)
    with np.errstate(invalid="ignore"):
        s_min = (vals[:, 0] - v_lo) / t_n
        s_max = (vals[:, 1] - v_hi) / t_n

    warnings = []
    if config.jitter:
        warnings.append("constraint values jittered by n^-3/4 uniform noise")
    if failures:
        warnings.append(f"{failures} perturbed inputs were infeasible and redrawn")
    root_n = math.sqrt(n)
    z = norm.ppf(0.5 + config.level / 2)
    q = [(1 - config.level) / 2, (1 + config.level) / 2]

    def summarise(v, s):
        if not np.all(np.isfinite(s)):
            warnings.append("an endpoint is infinite; its standard error is undefined")
            nan = (math.nan, math.nan)
            return math.nan, nan, nan
        se = float(np.std(s, ddof=1) / root_n)
        qs = np.quantile(np.sort(s), q) / root_n
        return se, (v - z * se, v + z * se), (float(v + qs[0]), float(v + qs[1]))

    se_lo, ci_lo, pci_lo = summarise(v_lo, s_min)
    se_hi, ci_hi, pci_hi = summarise(v_hi, s_max)
    sw = s_max - s_min
    se_w = float(np.std(sw, ddof=1) / root_n) if np.all(np.isfinite(sw)) else math.nan
    return BootstrapResult(float(v_lo), float(v_hi), se_lo, se_hi, se_w, ci_lo, ci_hi,
                           pci_lo, pci_hi, s_min, s_max, n, t_n, config.level,
                           attempts, failures, warnings)


def width_statistics(result: BootstrapResult, point_bounds: BoundsResult | None = None):
    """``(width, se_width, percentile_ci_width)`` of the identified interval."""
    lo = point_bounds.lower if point_bounds is not None else result.lower
    hi = point_bounds.upper if point_bounds is not None else result.upper
    width = hi - lo
    sw = result.draws_max - result.draws_min
    root_n = math.sqrt(result.n)
    if not np.all(np.isfinite(sw)):
        return width, math.nan, (math.nan, math.nan)
    se = float(np.std(sw, ddof=1) / root_n)
    q = np.quantile(np.sort(sw), [(1 - result.level) / 2, (1 + result.level) / 2]) / root_n
    return width, se, (float(width + q[0]), float(width + q[1]))


def coverage_experiment(shares, brackets, n: int = 400, replicates: int = 300,
                        mc: int = 200, seed: int = 0, level: float = 0.95,
                        alpha: float = 0.25) -> dict:
    """Monte Carlo coverage of normal bootstrap CIs for the grouped-table Gini bounds.

    The population is described by bracket shares, so the true bounds are the
    share-level bounds at ``shares``.
    """
    shares = np.asarray(shares, dtype=float)
    truth = gini_bounds_1a(GroupedTable(brackets, shares), grid=False)
    rng = np.random.default_rng(seed)
    seeds = np.random.SeedSequence(seed).spawn(mc)
    hits_lo = hits_hi = 0
    for r in range(mc):
        counts = rng.multinomial(n, shares)
        table = GroupedTable(brackets, counts)
        res = bootstrap_bounds(table, IndexSpec("gini"), "1",
                               BootstrapConfig(replicates=replicates, seed=seeds[r],
                                               alpha=alpha, level=level))
        hits_lo += res.ci_lower[0] <= truth.lower <= res.ci_lower[1]
        hits_hi += res.ci_upper[0] <= truth.upper <= res.ci_upper[1]
    return {"true_lower": truth.lower, "true_upper": truth.upper,
            "coverage_lower": hits_lo / mc, "coverage_upper": hits_hi / mc, "mc": mc}


__all__ = [
    "BootstrapConfig",
    "BootstrapResult",
    "bootstrap_bounds",
    "coverage_experiment",
    "largest_remainder",
    "width_statistics",
]
