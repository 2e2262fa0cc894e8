"""Single-PR-fraction decompositions and dimension-2 local model search."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import least_squares

from .box import (BITS, PR_IDS, Box, Mixture, VertexId, make_pr, maximally_mixed, mix,
                  to_fraction, validate)
from .lp import convex_weights
from .measures import chsh, correlators, is_local_lp, nl
from .sampling import make_rng

SUCCESS_L1 = 1e-8
SWEEP_TOL = 1e-10
DEFAULT_RESTARTS = 50
DEFAULT_MAX_ITERS = 500


class TheoremCounterexampleError(RuntimeError):
    """No PR vertex gives a residual that is valid, local and has NL = 0."""

    def __init__(self, box: Box, p_pr: Fraction, diagnostics: list[dict]):
        self.box = box
        self.p_pr = p_pr
        self.diagnostics = diagnostics
        failed = ", ".join(
            f"{d['pr_vertex']}: " + ",".join(k for k, v in d["checks"].items() if not v)
            for d in diagnostics)
        super().__init__(f"no PR vertex passes at p_pr={p_pr} ({failed})")


class LemmaStructureError(RuntimeError):
    """Residual of a PR mixture is not a mixture of two-PR midpoints."""


@dataclass(frozen=True)
class PrDecomposition:
    p_pr: Fraction
    pr_vertex: VertexId | None
    residual: Box
    checks: dict
    alternatives: tuple[VertexId, ...] = ()
    pair_weights: dict | None = None

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def mixture(self) -> Mixture:
        pr = self.pr_vertex.box() if self.pr_vertex else maximally_mixed()
        return Mixture(((self.p_pr, pr), (1 - self.p_pr, self.residual)),
                       (self.pr_vertex, "residual"))


def _residual_checks(b: Box, p: Fraction, pr: Box, residual: Box) -> dict:
    report = validate(residual)
    valid = report.ok
    return {
        "reconstructs": mix([(p, pr), (1 - p, residual)]) == b,
        "residual_valid": valid,
        "residual_local": valid and is_local_lp(residual).is_local,
        "residual_nl_zero": valid and nl(residual).nl == 0,
    }


def pr_candidates(b: Box) -> list[VertexId]:
    """PR vertices ordered by decreasing matched CHSH value, then label."""
    return sorted(PR_IDS, key=lambda v: (-chsh(b, *v.labels), v.labels))


def decompose_pr_fraction(b: Box) -> PrDecomposition:
    """Write ``b = p PR + (1 - p) L`` with ``p = NL(b)/4`` and verify ``L``.

    Every PR vertex is tried in :func:`pr_candidates` order; the first whose
    residual is valid, Bell-local and has NL = 0 is returned, and all other
    passing vertices are listed in ``alternatives``.
    """
    p = nl(b).nl / 4
    if p == 0:
        checks = _residual_checks(b, p, maximally_mixed(), b)
        return PrDecomposition(p, None, b, checks)

    passing: list[tuple[VertexId, Box, dict]] = []
    diagnostics = []
    for vid in pr_candidates(b):
        pr = vid.box()
        if p == 1:
            residual = maximally_mixed()
        else:
            residual = (b - pr.scale(p)).scale(1 / (1 - p))
        checks = _residual_checks(b, p, pr, residual)
        diagnostics.append({"pr_vertex": str(vid), "chsh": chsh(b, *vid.labels),
                            "checks": checks})
        if all(checks.values()):
            passing.append((vid, residual, checks))
    if not passing:
        raise TheoremCounterexampleError(b, p, diagnostics)
    vid, residual, checks = passing[0]
    return PrDecomposition(p, vid, residual, checks, tuple(v for v, _, _ in passing[1:]))


PAIR_IDS = tuple(itertools.combinations(PR_IDS, 2))


def _pair_midpoints() -> list[Box]:
    half = Fraction(1, 2)
    return [mix([(half, u.box()), (half, v.box())]) for u, v in PAIR_IDS]


def pr_mixture(weights: Mapping | Sequence) -> Box:
    """Box ``sum w_abc PR_abc`` from a mapping or an 8-vector in label order."""
    if isinstance(weights, Mapping):
        lookup = {}
        for key, w in weights.items():
            vid = key if isinstance(key, VertexId) else (
                VertexId.parse(key) if isinstance(key, str) else VertexId("pr", tuple(key)))
            lookup[vid] = to_fraction(w)
        w_list = [lookup.get(v, Fraction(0)) for v in PR_IDS]
    else:
        if len(weights) != 8:
            raise ValueError("need 8 PR weights")
        w_list = [to_fraction(w) for w in weights]
    return mix(Mixture(tuple(zip(w_list, (v.box() for v in PR_IDS))), PR_IDS))


def decompose_pr_mixture(weights: Mapping | Sequence) -> PrDecomposition:
    """Split a mixture of PR boxes into one PR box plus two-PR midpoints."""
    b = pr_mixture(weights)
    dec = decompose_pr_fraction(b)
    points = [correlators(m).coordinates() for m in _pair_midpoints()]
    w = convex_weights(points, correlators(dec.residual).coordinates())
    if w is None:
        raise LemmaStructureError("residual is outside the hull of two-PR midpoints")
    pair_weights = {f"{u}+{v}": wi for (u, v), wi in zip(PAIR_IDS, w) if wi}
    return PrDecomposition(dec.p_pr, dec.pr_vertex, dec.residual, dec.checks,
                           dec.alternatives, pair_weights)


# -- dimension-2 local models ------------------------------------------------

@dataclass(frozen=True)
class Dim2LocalModel:
    """``P(ab|xy) = sum_l w[l] alice[l][x][a] bob[l][y][b]`` with two values of l.

    Entries may be Fractions (exact construction) or floats (search output).
    """

    weights: tuple
    alice: tuple  # alice[l][x][a]
    bob: tuple  # bob[l][y][b]

    @property
    def exact(self) -> bool:
        rows = [row for table in (self.alice, self.bob) for per_l in table for row in per_l]
        vals = [*self.weights, *(v for row in rows for v in row)]
        return all(isinstance(v, (Fraction, int)) and not isinstance(v, bool) for v in vals)

    def box(self) -> Box:
        if not self.exact:
            raise TypeError("model has floating entries; use to_array()")
        w, A, B = self.weights, self.alice, self.bob
        return Box.from_function(
            lambda x, y, a, b: sum(w[l] * A[l][x][a] * B[l][y][b] for l in BITS))

    def to_array(self) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        A = np.asarray(self.alice, dtype=float)
        B = np.asarray(self.bob, dtype=float)
        return np.einsum("l,lxa,lyb->xyab", w, A, B)

    def rationalize(self, max_denominator: int = 10**6) -> "Dim2LocalModel":
        def pair(first):
            # keep each pair normalized by construction
            v = Fraction(float(first)).limit_denominator(max_denominator)
            return v, 1 - v

        return Dim2LocalModel(pair(self.weights[0]),
                              tuple(tuple(pair(row[0]) for row in t) for t in self.alice),
                              tuple(tuple(pair(row[0]) for row in t) for t in self.bob))


@dataclass(frozen=True)
class ModelSearchResult:
    status: str  # "Found" | "NotFound"
    model: Dim2LocalModel | None
    residual_l1: float
    restarts_used: int
    residuals: tuple[float, ...] = field(default=(), repr=False)

    @property
    def found(self) -> bool:
        return self.status == "Found"


def random_dim2_model(rng=None, scale: int = 1000, deterministic: bool = False) -> Dim2LocalModel:
    """Random exact model; ``deterministic`` restricts each response to 0/1."""
    rng = make_rng(rng)
    k = int(rng.integers(0, scale + 1))
    weights = (Fraction(k, scale), Fraction(scale - k, scale))

    def table():
        if deterministic:
            outs = [int(v) for v in rng.integers(0, 2, size=2)]
            return tuple((Fraction(1 - o), Fraction(o)) for o in outs)
        rows = []
        for _ in BITS:
            t = Fraction(int(rng.integers(0, scale + 1)), scale)
            rows.append((t, 1 - t))
        return tuple(rows)

    return Dim2LocalModel(weights, (table(), table()), (table(), table()))


def _unpack(theta):
    w = theta[0]
    ta = theta[1:5].reshape(2, 2)  # P_l(a=0|x)
    tb = theta[5:9].reshape(2, 2)  # P_l(b=0|y)
    return w, ta, tb


def _model_array(theta) -> np.ndarray:
    w, ta, tb = _unpack(theta)
    A = np.stack([ta, 1 - ta], axis=-1)
    B = np.stack([tb, 1 - tb], axis=-1)
    return np.einsum("l,lxa,lyb->xyab", np.array([w, 1 - w]), A, B)


def _box_lsq2(M: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Least squares ``min |M t - r|`` over ``t`` in the unit square."""
    def cost(t):
        d = M @ t - r
        return float(d @ d)

    candidates = []
    sol, *_ = np.linalg.lstsq(M, r, rcond=None)
    if np.all((sol >= 0) & (sol <= 1)):
        candidates.append(sol)
    for k in (0, 1):
        j = 1 - k
        for fixed in (0.0, 1.0):
            col = M[:, j]
            nrm = float(col @ col)
            resid = r - M[:, k] * fixed
            tj = float(np.clip(col @ resid / nrm, 0.0, 1.0)) if nrm > 0 else 0.0
            t = np.empty(2)
            t[k], t[j] = fixed, tj
            candidates.append(t)
    return min(candidates, key=cost)


def _solve_party(target, weights, other, party: str):
    """Bounded least squares for one party's P_l(out=0|in), others fixed."""
    t = np.empty((2, 2))
    for inp in BITS:
        # columns: l = 0, 1; rows over (other input, own output, other output)
        rows, rhs = [], []
        for oin in BITS:
            for own in BITS:
                for oout in BITS:
                    sgn = 1.0 if own == 0 else -1.0
                    coef = [weights[l] * other[l][oin][oout] * sgn for l in BITS]
                    const = sum(weights[l] * other[l][oin][oout] for l in BITS) if own else 0.0
                    val = target[inp, oin, own, oout] if party == "a" else target[oin, inp, oout, own]
                    rows.append(coef)
                    rhs.append(val - const)
        t[:, inp] = _box_lsq2(np.array(rows), np.array(rhs))
    return t


def _solve_weight(target, ta, tb):
    theta0 = np.concatenate([[1.0], ta.ravel(), tb.ravel()])
    theta1 = theta0.copy()
    theta1[0] = 0.0
    m0 = _model_array(theta0).ravel()
    m1 = _model_array(theta1).ravel()
    d = m0 - m1
    denom = float(d @ d)
    if denom == 0.0:
        return 0.5
    return float(np.clip((target.ravel() - m1) @ d / denom, 0.0, 1.0))


def _one_restart(target, rng, max_iters: int):
    theta = rng.uniform(0.0, 1.0, size=9)
    prev = np.inf
    for _ in range(max_iters):
        w, ta, tb = _unpack(theta)
        wts = (w, 1 - w)
        B = np.stack([tb, 1 - tb], axis=-1)
        ta = _solve_party(target, wts, B, "a")
        A = np.stack([ta, 1 - ta], axis=-1)
        tb = _solve_party(target, wts, A, "b")
        w = _solve_weight(target, ta, tb)
        theta = np.concatenate([[w], ta.ravel(), tb.ravel()])
        obj = float(np.sum((_model_array(theta) - target) ** 2))
        if prev - obj < SWEEP_TOL or np.abs(_model_array(theta) - target).sum() <= SUCCESS_L1:
            break
        prev = obj
    # joint polish: the bilinear fit converges linearly under alternation,
    # and interior-point steps stall just short of active bounds
    def l1(th):
        return float(np.abs(_model_array(th) - target).sum())

    res = least_squares(lambda th: (_model_array(th) - target).ravel(), theta,
                        bounds=(0.0, 1.0), xtol=1e-15, ftol=1e-15, gtol=1e-15)
    candidates = [theta, res.x]
    snapped = np.where(res.x < 1e-6, 0.0, np.where(res.x > 1 - 1e-6, 1.0, res.x))
    free = (snapped > 0.0) & (snapped < 1.0)
    if free.any():
        def fit(f):
            th = snapped.copy()
            th[free] = f
            return (_model_array(th) - target).ravel()

        refit = least_squares(fit, snapped[free], method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15)
        if np.all((refit.x >= 0.0) & (refit.x <= 1.0)):
            snapped = snapped.copy()
            snapped[free] = refit.x
    candidates.append(snapped)
    best = min(candidates, key=l1)
    return best, l1(best)


def _theta_to_model(theta) -> Dim2LocalModel:
    w, ta, tb = _unpack(theta)
    alice = tuple(tuple((float(ta[l, x]), float(1 - ta[l, x])) for x in BITS) for l in BITS)
    bob = tuple(tuple((float(tb[l, y]), float(1 - tb[l, y])) for y in BITS) for l in BITS)
    return Dim2LocalModel((float(w), float(1 - w)), alice, bob)


def find_dim2_model(b: Box, restarts: int = DEFAULT_RESTARTS, max_iters: int = DEFAULT_MAX_ITERS,
                    seed=0) -> ModelSearchResult:
    """Alternating least-squares search for a two-valued local model of ``b``.

    Restart ``k`` uses the ``k``-th child of ``SeedSequence(seed)``; the search
    stops at the first restart whose L1 residual is at most ``SUCCESS_L1``.
    ``NotFound`` does not prove that no model exists.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    target = b.to_float()
    children = np.random.SeedSequence(seed).spawn(restarts)
    best_theta, best = None, np.inf
    residuals = []
    for k, child in enumerate(children):
        theta, r = _one_restart(target, np.random.Generator(np.random.PCG64(child)), max_iters)
        residuals.append(r)
        if r < best:
            best_theta, best = theta, r
        if r <= SUCCESS_L1:
            return ModelSearchResult("Found", _theta_to_model(theta), r, k + 1, tuple(residuals))
    return ModelSearchResult("NotFound", _theta_to_model(best_theta), best, restarts,
                             tuple(residuals))


@dataclass(frozen=True)
class Prop1Report:
    n: int
    seed: object
    failures: tuple  # (index, model, nl) for nl != 0

    @property
    def ok(self) -> bool:
        return not self.failures

    @property
    def max_nl(self) -> Fraction:
        return max((f[2] for f in self.failures), default=Fraction(0))


def verify_prop1_sample(n: int, seed=0, deterministic: bool = False) -> Prop1Report:
    """Build ``n`` random exact two-valued local models and test ``NL == 0``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    failures = []
    for i in range(n):
        model = random_dim2_model(rng, deterministic=deterministic)
        value = nl(model.box()).nl
        if value != 0:
            failures.append((i, model, value))
    return Prop1Report(n, seed, tuple(failures))
