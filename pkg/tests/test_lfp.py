import math

import numpy as np
import pytest
from scipy.optimize import linprog

from ineqbounds.errors import BracketViolation, DegenerateDenominator, Stalled
from ineqbounds.lfp import (
    DinkelbachOracle,
    LinearFractionalProblem,
    LinearProgram,
    charnes_cooper,
    dinkelbach_bisect,
    ordering_matrix,
    solve_lfp,
    solve_lp,
)


class TestSimplex:
    def test_single_bound(self):
        res = solve_lp(LinearProgram([1.0], [[1.0]], [3.0], sense="max"))
        assert res.optimal and res.value == pytest.approx(3) and res.x[0] == pytest.approx(3)

    def test_degenerate_face(self):
        res = solve_lp(LinearProgram([1.0, 1.0], [[1.0, 1.0]], [1.0], sense="max"))
        assert res.value == pytest.approx(1)
        assert res.x.sum() == pytest.approx(1) and np.all(res.x >= -1e-12)

    def test_infeasible(self):
        res = solve_lp(LinearProgram([1.0], [[1.0]], [-1.0]))
        assert res.status == "infeasible"

    def test_unbounded(self):
        res = solve_lp(LinearProgram([1.0], sense="max"))
        assert res.status == "unbounded"

    def test_free_and_equality(self):
        lp = LinearProgram([1.0, -1.0], A_eq=[[1.0, 1.0]], b_eq=[2.0],
                           lb=[-5.0, -np.inf], ub=[np.inf, 4.0])
        res = solve_lp(lp)
        # x2 = 2 - x1 <= 4 forces x1 >= -2
        assert res.value == pytest.approx(-6)
        assert np.allclose(res.x, [-2, 4])

    def test_matches_scipy_and_complementary_slackness(self):
        rng = np.random.default_rng(0)
        checked = 0
        for _ in range(200):
            m, n = rng.integers(1, 6), rng.integers(1, 6)
            A = rng.normal(size=(m, n))
            x0 = rng.uniform(0, 2, n)
            b = A @ x0 + rng.uniform(0, 1, m)
            c = rng.normal(size=n)
            ub = rng.uniform(2, 4, n)
            ref = linprog(c, A_ub=A, b_ub=b, bounds=list(zip([0] * n, ub)), method="highs")
            res = solve_lp(LinearProgram(c, A, b, ub=ub))
            assert res.optimal == (ref.status == 0)
            if not res.optimal:
                continue
            checked += 1
            assert res.value == pytest.approx(ref.fun, abs=1e-7)
            slack = b - A @ res.x
            assert np.all(slack >= -1e-9)
            assert np.all(np.abs(res.dual_ub * slack) <= 1e-7)
            # dual objective equals primal value
            active = np.where(np.isclose(res.x, ub), ub, 0.0)
            dual_value = res.dual_ub @ b + res.reduced_costs @ active
            assert dual_value == pytest.approx(res.value, abs=1e-7)
        assert checked > 150


def ecc_problem():
    return LinearFractionalProblem.sorted_box([1.0, 0.0], [1.0, 1.0], [1, 1], [2, 2])


class TestCharnesCooper:
    def test_ecc_max(self):
        sol = solve_lfp(ecc_problem(), "max")
        assert sol.value == pytest.approx(0.5, abs=1e-9)
        assert sol.y[0] == pytest.approx(sol.y[1])

    def test_ecc_min(self):
        sol = solve_lfp(ecc_problem(), "min")
        assert sol.value == pytest.approx(1 / 3, abs=1e-9)
        assert np.allclose(sol.y, [1, 2])

    def test_ecc_grid_oracle(self):
        g = np.round(np.arange(1, 2.0001, 0.01), 10)
        y1, y2 = np.meshgrid(g, g, indexing="ij")
        ok = y1 <= y2
        r = (y1 / (y1 + y2))[ok]
        assert r.max() == pytest.approx(solve_lfp(ecc_problem(), "max").value, abs=1e-12)
        assert r.min() == pytest.approx(solve_lfp(ecc_problem(), "min").value, abs=1e-12)

    def test_constant_ratio(self):
        p = LinearFractionalProblem.sorted_box([1, 2, 3], [1, 2, 3], [1, 1, 1], [4, 5, 6])
        assert solve_lfp(p, "max").value == pytest.approx(1)
        assert solve_lfp(p, "min").value == pytest.approx(1)

    def test_transformed_program_shape(self):
        lp = charnes_cooper(ecc_problem(), "max")
        assert lp.n_vars == 3 and lp.lb[-1] > 0 and lp.sense == "max"

    def test_degenerate_denominator(self):
        p = LinearFractionalProblem.sorted_box([1.0, 0.0], [1.0, 1.0], [-1, -1], [1, 1])
        with pytest.raises(DegenerateDenominator):
            solve_lfp(p, "max")

    def test_infinite_quantile_ratio(self):
        p = LinearFractionalProblem.sorted_box([0.0, 1.0], [1.0, 0.0], [0, 1], [1, 2])
        assert solve_lfp(p, "max", allow_infinite=True).value == math.inf
        assert solve_lfp(p, "min", allow_infinite=True).value == pytest.approx(1)

    def test_round_trip_random(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            n = int(rng.integers(1, 7))
            lo = np.sort(rng.uniform(0.1, 5, n))
            hi = lo + rng.uniform(0, 3, n)
            hi = np.maximum.accumulate(hi)
            r1, r2 = rng.normal(size=n), rng.uniform(0.5, 2, n)
            p = LinearFractionalProblem.sorted_box(r1, r2, lo, hi)
            for direction in ("min", "max"):
                lp = charnes_cooper(p, direction)
                res = solve_lp(lp)
                sol = solve_lfp(p, direction)
                assert p.feasible(sol.y)
                assert abs(p.ratio(sol.y) - sol.value) <= 1e-7
                assert abs(res.value - sol.value) <= 1e-7

    def test_ordering_matrix(self):
        E = ordering_matrix(3)
        assert np.all(E @ np.array([1, 2, 3]) <= 0)
        assert np.any(E @ np.array([2, 1, 3]) > 0)


class TestDinkelbach:
    def test_linear_root(self):
        res = dinkelbach_bisect(DinkelbachOracle(lambda lam: 0.5 - lam))
        assert abs(res.lam - 0.5) <= 1e-6

    def test_quadratic_subproblem(self):
        # f(lam) = max_p p(1 - p) - lam p = (1 - lam)^2 / 4 vanishes only at lam = 1;
        # the parametric form of max p(1-p)/p over (0, 1] whose supremum is 1
        def f(lam):
            p = min(max((1 - lam) / 2, 0.0), 1.0)
            return p * (1 - p) - lam * p

        res = dinkelbach_bisect(DinkelbachOracle(f, eps=1e-6))
        assert f(res.lam) <= 0
        assert res.lam == pytest.approx(1.0, abs=1e-6)

    def test_widths_halve_exactly(self):
        res = dinkelbach_bisect(DinkelbachOracle(lambda lam: 0.3 - lam, eps=1e-9))
        for i, w in enumerate(res.widths):
            assert w == math.ldexp(1.0, -i)

    def test_widths_scale_with_bracket(self):
        res = dinkelbach_bisect(DinkelbachOracle(lambda lam: 1.3 - lam, lo=0, hi=4, eps=1e-6))
        for i, w in enumerate(res.widths):
            assert w == 4 * math.ldexp(1.0, -i)
        assert res.iterations <= math.ceil(math.log2(4 / 1e-6)) + 8

    def test_min_direction(self):
        res = dinkelbach_bisect(DinkelbachOracle(lambda lam: 0.25 - lam, direction="min"))
        assert 0 >= 0.25 - res.lam >= -1e-6

    def test_bracket_violation(self):
        with pytest.raises(BracketViolation):
            dinkelbach_bisect(DinkelbachOracle(lambda lam: 2 - lam))

    def test_stalled(self):
        # f jumps over [-eps, 0] so the stopping rule never fires
        def f(lam):
            return 1.0 if lam < 0.5 else -1.0

        with pytest.raises(Stalled):
            dinkelbach_bisect(DinkelbachOracle(f, eps=1e-6))

    def test_cap(self):
        assert DinkelbachOracle(lambda lam: 0, eps=1e-6).cap() == 20 + 8
