from itertools import combinations

import numpy as np
import pytest

from netchoice.simplex import INFEASIBLE, OPTIMAL, LinearConstraint, simplex_solve


def enumerate_vertices(A_rows, senses, b, n, upper):
    """Oracle: all basic feasible points of the box-plus-rows system.

    Stacks every constraint (rows, lower bounds, upper bounds) and solves all
    n-subsets taken as tight; keeps points satisfying everything.
    """
    planes = []
    for row, sense, rhs in zip(A_rows, senses, b):
        planes.append((np.array(row, dtype=float), float(rhs)))
    for i in range(n):
        lower = np.zeros(n)
        lower[i] = 1.0
        planes.append((lower, 0.0))
        planes.append((lower.copy(), float(upper[i])))
    points = []
    for subset in combinations(range(len(planes)), n):
        M = np.array([planes[k][0] for k in subset])
        rhs = np.array([planes[k][1] for k in subset])
        if abs(np.linalg.det(M)) < 1e-10:
            continue
        x = np.linalg.solve(M, rhs)
        ok = np.all(x >= -1e-9) and np.all(x <= np.asarray(upper) + 1e-9)
        for row, sense, rhs_val in zip(A_rows, senses, b):
            value = float(np.dot(row, x))
            if sense == "<=" and value > rhs_val + 1e-9:
                ok = False
            elif sense == ">=" and value < rhs_val - 1e-9:
                ok = False
            elif sense == "=" and abs(value - rhs_val) > 1e-9:
                ok = False
            if not ok:
                break
        if ok:
            points.append(x)
    return points


class TestBasics:
    def test_single_bound(self):
        result = simplex_solve(1, [LinearConstraint({0: 1.0}, "<=", 0.5)],
                               [1.0], maximize=True, upper_bounds=[1.0])
        assert result.status == OPTIMAL
        assert result.value == pytest.approx(0.5)

    def test_infeasible_pair(self):
        rows = [LinearConstraint({0: 1.0}, ">=", 0.6),
                LinearConstraint({0: 1.0}, "<=", 0.4)]
        result = simplex_solve(1, rows, [1.0], upper_bounds=[1.0])
        assert result.status == INFEASIBLE

    def test_equality_system(self):
        rows = [LinearConstraint({0: 1.0, 1: 1.0}, "=", 1.0)]
        result = simplex_solve(2, rows, [0.0, 1.0], maximize=True, upper_bounds=[1, 1])
        assert result.status == OPTIMAL
        assert result.value == pytest.approx(1.0)
        np.testing.assert_allclose(result.x, [0.0, 1.0], atol=1e-12)

    def test_negative_rhs_normalized(self):
        rows = [LinearConstraint({0: -1.0}, "<=", -0.3)]  # x >= 0.3
        result = simplex_solve(1, rows, [1.0], maximize=False, upper_bounds=[1.0])
        assert result.status == OPTIMAL
        assert result.value == pytest.approx(0.3)

    def test_degenerate_redundant_rows(self):
        rows = [LinearConstraint({0: 1.0, 1: 1.0}, "=", 1.0),
                LinearConstraint({0: 2.0, 1: 2.0}, "=", 2.0)]
        result = simplex_solve(2, rows, [1.0, 0.0], upper_bounds=[1, 1])
        assert result.status == OPTIMAL
        assert result.value == pytest.approx(0.0)

    def test_rejects_unknown_variable(self):
        with pytest.raises(ValueError, match="unknown variable"):
            simplex_solve(1, [LinearConstraint({3: 1.0}, "<=", 1.0)], [1.0])


class TestAgainstVertexEnumeration:
    def test_random_boxed_lps(self):
        rng = np.random.default_rng(100)
        solved = 0
        for trial in range(100):
            n = int(rng.integers(2, 9))
            m = int(rng.integers(1, 6))
            A = rng.normal(size=(m, n)).round(2)
            b = rng.normal(size=m).round(2)
            senses = [str(s) for s in rng.choice(["<=", ">=", "="], size=m,
                                                 p=[0.5, 0.3, 0.2])]
            c = rng.normal(size=n).round(2)
            upper = np.ones(n)
            rows = [
                LinearConstraint({j: A[i, j] for j in range(n) if A[i, j] != 0.0},
                                 senses[i], b[i])
                for i in range(m)
            ]
            result = simplex_solve(n, rows, c, maximize=False, upper_bounds=upper)
            vertices = enumerate_vertices(A, senses, b, n, upper)
            if not vertices:
                assert result.status == INFEASIBLE
                continue
            best = min(float(np.dot(c, v)) for v in vertices)
            assert result.status == OPTIMAL
            assert result.value == pytest.approx(best, abs=1e-7)
            solved += 1
        assert solved >= 40  # the generator must exercise plenty of feasible cases
