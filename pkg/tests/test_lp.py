from fractions import Fraction

import numpy as np
import pytest
from scipy.optimize import linprog

from nsbox.lp import INFEASIBLE, OPTIMAL, UNBOUNDED, convex_weights, solve_lp


def test_simple_optimum():
    # min -x - y  s.t.  x + 2y + s1 = 4, 3x + y + s2 = 6
    res = solve_lp([[1, 2, 1, 0], [3, 1, 0, 1]], [4, 6], [-1, -1, 0, 0])
    assert res.status == OPTIMAL
    assert res.x[:2] == (Fraction(8, 5), Fraction(6, 5))
    assert res.objective == Fraction(-14, 5)


def test_infeasible():
    assert solve_lp([[1, 1]], [-1]).status == INFEASIBLE


def test_unbounded():
    assert solve_lp([[1, -1]], [0], [-1, 0]).status == UNBOUNDED


def test_redundant_rows():
    res = solve_lp([[1, 1], [2, 2], [1, 1]], [1, 2, 1])
    assert res.status == OPTIMAL
    assert sum(res.x) == 1


def test_degenerate_cycling_example():
    # Beale's example cycles under the textbook largest-coefficient rule
    A = [[Fraction(1, 4), -8, -1, 9, 1, 0, 0],
         [Fraction(1, 2), -12, Fraction(-1, 2), 3, 0, 1, 0],
         [0, 0, 1, 0, 0, 0, 1]]
    c = [Fraction(-3, 4), 20, Fraction(-1, 2), 6, 0, 0, 0]
    res = solve_lp(A, [0, 0, 1], c)
    assert res.status == OPTIMAL
    assert res.objective == Fraction(-5, 4)


def test_convex_weights_square():
    pts = [(0, 0), (1, 0), (0, 1), (1, 1)]
    w = convex_weights(pts, (Fraction(1, 2), Fraction(1, 3)))
    assert w is not None and sum(w) == 1 and min(w) >= 0
    assert tuple(sum(wi * p[k] for wi, p in zip(w, pts)) for k in range(2)) == (
        Fraction(1, 2), Fraction(1, 3))
    assert convex_weights(pts, (2, 0)) is None


def test_feasibility_agrees_with_scipy():
    rng = np.random.default_rng(7)
    for _ in range(60):
        m, n = int(rng.integers(2, 5)), int(rng.integers(3, 7))
        A = rng.integers(-3, 4, size=(m, n))
        b = rng.integers(-3, 4, size=m)
        ref = linprog(np.zeros(n), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
        ours = solve_lp(A.tolist(), b.tolist())
        assert (ours.status == OPTIMAL) == (ref.status == 0)
        if ours.status == OPTIMAL:
            assert all(v >= 0 for v in ours.x)
            assert [sum(Fraction(int(a)) * x for a, x in zip(row, ours.x)) for row in A] == list(b)


@pytest.mark.parametrize("seed", range(20))
def test_optimum_agrees_with_scipy(seed):
    rng = np.random.default_rng(seed)
    m, n = 3, 6
    A = rng.integers(0, 5, size=(m, n))
    x0 = rng.integers(0, 3, size=n)
    b = A @ x0  # feasible by construction
    c = rng.integers(0, 6, size=n)  # c >= 0 keeps the problem bounded
    ref = linprog(c, A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    ours = solve_lp(A.tolist(), b.tolist(), c.tolist())
    assert ours.status == OPTIMAL
    assert float(ours.objective) == pytest.approx(ref.fun, abs=1e-9)
