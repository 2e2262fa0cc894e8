"""Exact two-phase simplex over ``fractions.Fraction``.

Solves ``min c.x  s.t.  A x = b, x >= 0`` with Bland's rule, so the
iteration is finite and every answer is exact.  Sized for the small
feasibility systems used in this package (tens of rows and columns).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LPResult:
    status: str
    x: tuple[Fraction, ...] | None = None
    objective: Fraction | None = None

    @property
    def feasible(self) -> bool:
        return self.status != INFEASIBLE


class _Tableau:
    def __init__(self, rows: list[list[Fraction]], rhs: list[Fraction], basis: list[int]):
        self.rows = rows
        self.rhs = rhs
        self.basis = basis

    def pivot(self, r: int, col: int) -> None:
        row = self.rows[r]
        piv = row[col]
        if piv != 1:
            inv = 1 / piv
            row[:] = [v * inv for v in row]
            self.rhs[r] *= inv
        for k, other in enumerate(self.rows):
            if k == r:
                continue
            f = other[col]
            if f:
                other[:] = [o - f * v if v else o for o, v in zip(other, row)]
                self.rhs[k] -= f * self.rhs[r]
        self.basis[r] = col

    def reduced_costs(self, cost: Sequence[Fraction], allowed: Sequence[bool]) -> list[Fraction]:
        n = len(cost)
        red = list(cost)
        for r, bcol in enumerate(self.basis):
            cb = cost[bcol]
            if cb:
                row = self.rows[r]
                for j in range(n):
                    if row[j]:
                        red[j] -= cb * row[j]
        return [red[j] if allowed[j] else Fraction(0) for j in range(n)]

    def run(self, cost: Sequence[Fraction], allowed: Sequence[bool]) -> str:
        """Minimize ``cost`` over the current basis; Bland's smallest-index rule."""
        while True:
            red = self.reduced_costs(cost, allowed)
            entering = next((j for j, v in enumerate(red) if v < 0), None)
            if entering is None:
                return OPTIMAL
            best = None
            for r, row in enumerate(self.rows):
                a = row[entering]
                if a > 0:
                    ratio = self.rhs[r] / a
                    key = (ratio, self.basis[r])
                    if best is None or key < best[0]:
                        best = (key, r)
            if best is None:
                return UNBOUNDED
            self.pivot(best[1], entering)


def solve_lp(A: Sequence[Sequence], b: Sequence, c: Sequence | None = None) -> LPResult:
    """Minimize ``c.x`` subject to ``A x = b`` and ``x >= 0``, exactly.

    With ``c=None`` only feasibility is decided and any vertex solution is
    returned.
    """
    m = len(A)
    n = len(A[0]) if m else 0
    zero = Fraction(0)
    rows, rhs = [], []
    for i in range(m):
        row = [Fraction(v) for v in A[i]]
        bi = Fraction(b[i])
        if bi < 0:
            row = [-v for v in row]
            bi = -bi
        # artificial columns n..n+m-1
        row.extend(Fraction(int(k == i)) for k in range(m))
        rows.append(row)
        rhs.append(bi)
    tab = _Tableau(rows, rhs, list(range(n, n + m)))

    phase1 = [zero] * n + [Fraction(1)] * m
    tab.run(phase1, [True] * (n + m))
    if sum((tab.rhs[r] for r, col in enumerate(tab.basis) if col >= n), zero) != 0:
        return LPResult(INFEASIBLE)

    # drive zero-level artificials out of the basis; drop redundant rows
    r = 0
    while r < len(tab.rows):
        if tab.basis[r] >= n:
            col = next((j for j in range(n) if tab.rows[r][j] != 0), None)
            if col is None:
                del tab.rows[r], tab.rhs[r], tab.basis[r]
                continue
            tab.pivot(r, col)
        r += 1

    cost = [Fraction(v) for v in c] + [zero] * m if c is not None else [zero] * (n + m)
    allowed = [True] * n + [False] * m
    status = tab.run(cost, allowed)
    x = [zero] * n
    for r, col in enumerate(tab.basis):
        x[col] = tab.rhs[r]
    if status == UNBOUNDED:
        return LPResult(UNBOUNDED, tuple(x))
    obj = sum((ci * xi for ci, xi in zip(cost, x)), zero)
    return LPResult(OPTIMAL, tuple(x), obj)


def convex_weights(points: Sequence[Sequence], target: Sequence) -> tuple[Fraction, ...] | None:
    """Weights ``w >= 0`` with ``sum w = 1`` and ``sum w_i points_i = target``.

    Returns ``None`` when ``target`` is outside the convex hull.
    """
    dim = len(target)
    A = [[pt[k] for pt in points] for k in range(dim)]
    A.append([1] * len(points))
    res = solve_lp(A, list(target) + [1])
    return res.x if res.status == OPTIMAL else None
