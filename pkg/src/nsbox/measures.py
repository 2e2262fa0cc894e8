"""Correlators, CHSH and covariance-CHSH functionals, the NL measure, and
two independent Bell-locality certifiers.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

from .box import BITS, DET_IDS, PR_IDS, VERTEX_IDS, Box, Mixture, VertexId, mix
from .lp import convex_weights

CHSH_LABELS = tuple(itertools.product(BITS, repeat=3))
LOCAL_BOUND = 2


class InternalInconsistencyError(RuntimeError):
    """A box expected to be nonsignaling could not be decomposed over the vertices."""


def _sign(bit: int) -> int:
    return -1 if bit else 1


@dataclass(frozen=True)
class CorrelatorSet:
    e: tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]  # <A_x B_y>
    ma: tuple[Fraction, Fraction]  # <A_x>
    mb: tuple[Fraction, Fraction]  # <B_y>

    def cov(self, x: int, y: int) -> Fraction:
        return self.e[x][y] - self.ma[x] * self.mb[y]

    def coordinates(self) -> tuple[Fraction, ...]:
        """Affine coordinates ``(ma0, ma1, mb0, mb1, e00, e01, e10, e11)``."""
        return (*self.ma, *self.mb, *self.e[0], *self.e[1])


def correlators(b: Box) -> CorrelatorSet:
    """Exact ``<A_x B_y>``, ``<A_x>`` and ``<B_y>``.

    Marginal expectations are averaged over the other party's input, which
    changes nothing for nonsignaling boxes and keeps empirical tables usable.
    """
    e = tuple(tuple(sum((_sign(a ^ bb) * b[x, y, a, bb] for a in BITS for bb in BITS), Fraction(0))
                    for y in BITS) for x in BITS)
    half = Fraction(1, 2)
    ma = tuple(half * sum((_sign(a) * b[x, y, a, bb] for y in BITS for a in BITS for bb in BITS),
                          Fraction(0)) for x in BITS)
    mb = tuple(half * sum((_sign(bb) * b[x, y, a, bb] for x in BITS for a in BITS for bb in BITS),
                          Fraction(0)) for y in BITS)
    return CorrelatorSet(e, ma, mb)


def _chsh_from(e, alpha: int, beta: int, gamma: int):
    return (_sign(gamma) * e[0][0] + _sign(beta ^ gamma) * e[0][1]
            + _sign(alpha ^ gamma) * e[1][0] + _sign(alpha ^ beta ^ gamma ^ 1) * e[1][1])


def chsh(b: Box, alpha: int, beta: int, gamma: int) -> Fraction:
    return _chsh_from(correlators(b).e, alpha, beta, gamma)


def _cov_chsh_from(cov, i: int):
    alpha, beta = divmod(i, 2)
    return abs(cov[0][0] + _sign(beta) * cov[0][1] + _sign(alpha) * cov[1][0]
               + _sign(alpha ^ beta ^ 1) * cov[1][1])


def cov_chsh(b: Box, i: int) -> Fraction:
    """Absolute covariance CHSH value with index ``i = 2*alpha + beta``."""
    if i not in range(4):
        raise ValueError("index must be in 0..3")
    c = correlators(b)
    cov = [[c.cov(x, y) for y in BITS] for x in BITS]
    return _cov_chsh_from(cov, i)


def gamma_triad(cb):
    """The three nested-difference quantities built from four covCHSH values."""
    return (abs(abs(cb[0] - cb[1]) - abs(cb[2] - cb[3])),
            abs(abs(cb[0] - cb[2]) - abs(cb[1] - cb[3])),
            abs(abs(cb[0] - cb[3]) - abs(cb[1] - cb[2])))


@dataclass(frozen=True)
class NlReport:
    correlators: CorrelatorSet
    chsh: dict  # (alpha, beta, gamma) -> Fraction
    covchsh: tuple[Fraction, Fraction, Fraction, Fraction]
    gamma: tuple[Fraction, Fraction, Fraction]
    nl: Fraction

    @property
    def pr_fraction(self) -> Fraction:
        return self.nl / 4

    @property
    def chsh_max(self) -> Fraction:
        return max(abs(v) for v in self.chsh.values())


def nl(b: Box) -> NlReport:
    """Full pipeline: correlators, covariances, covCHSH, Gamma triad, NL."""
    c = correlators(b)
    cov = [[c.cov(x, y) for y in BITS] for x in BITS]
    cb = tuple(_cov_chsh_from(cov, i) for i in range(4))
    gam = gamma_triad(cb)
    return NlReport(
        correlators=c,
        chsh={lab: _chsh_from(c.e, *lab) for lab in CHSH_LABELS},
        covchsh=cb,
        gamma=gam,
        nl=min(gam),
    )


def nl_value_float(p) -> float:
    """Floating-point NL of a ``[x][y][a][b]`` array, for sensitivity analysis."""
    import numpy as np

    p = np.asarray(p, dtype=float)
    s = np.array([1.0, -1.0])
    e = np.einsum("xyab,a,b->xy", p, s, s)
    ma = np.einsum("xyab,a->x", p, s) / 2
    mb = np.einsum("xyab,b->y", p, s) / 2
    cov = e - np.outer(ma, mb)
    cb = [_cov_chsh_from(cov, i) for i in range(4)]
    return float(min(gamma_triad(cb)))


# -- locality certificates ---------------------------------------------------

@dataclass(frozen=True)
class LocalityCertificate:
    """Outcome of a locality test.

    ``weights`` (over the 16 deterministic boxes) is set only by the LP
    certifier on local boxes.  ``label``/``value`` record the CHSH
    expression with the largest absolute value.
    """

    is_local: bool
    method: str
    weights: tuple[Fraction, ...] | None = None
    label: tuple[int, int, int] | None = None
    value: Fraction | None = None

    def mixture(self) -> Mixture:
        if self.weights is None:
            raise ValueError("certificate carries no local weights")
        return Mixture(tuple(zip(self.weights, (v.box() for v in DET_IDS))), DET_IDS)


def is_local_chsh(b: Box) -> LocalityCertificate:
    """Local iff every CHSH expression is within ``[-2, 2]``."""
    values = {lab: chsh(b, *lab) for lab in CHSH_LABELS}
    label = max(CHSH_LABELS, key=lambda lab: (abs(values[lab]), [-v for v in lab]))
    value = values[label]
    return LocalityCertificate(abs(value) <= LOCAL_BOUND, "chsh", label=label, value=value)


@lru_cache(maxsize=None)
def _vertex_coordinates(ids: tuple[VertexId, ...]) -> tuple[tuple[Fraction, ...], ...]:
    return tuple(correlators(v.box()).coordinates() for v in ids)


def is_local_lp(b: Box) -> LocalityCertificate:
    """Exact membership in the convex hull of the 16 deterministic boxes."""
    w = convex_weights(_vertex_coordinates(DET_IDS), correlators(b).coordinates())
    if w is None:
        return LocalityCertificate(False, "lp")
    return LocalityCertificate(True, "lp", weights=w)


def decompose_over_vertices(b: Box) -> Mixture:
    """Exact weights over all 24 vertices reproducing ``b``."""
    w = convex_weights(_vertex_coordinates(VERTEX_IDS), correlators(b).coordinates())
    if w is None:
        raise InternalInconsistencyError("box is outside the nonsignaling polytope")
    m = Mixture(tuple(zip(w, (v.box() for v in VERTEX_IDS))), VERTEX_IDS)
    if mix(m) != b:
        raise InternalInconsistencyError("vertex weights do not reproduce the box")
    return m
