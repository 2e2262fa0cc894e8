"""CHSH key-distribution pipeline: the noisy-PR family, key rates, Eve
extensions and a seeded Monte Carlo protocol simulator.

Everything up to the joint key distribution is exact; entropies are
computed in double precision.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .box import (BITS, Box, BoxFormatError, format_fraction, make_pr, maximally_mixed, mix,
                  parse_table, to_fraction)
from .decomposition import Dim2LocalModel
from .measures import NlReport, nl, nl_value_float

SQRT2 = math.sqrt(2.0)


class NotQuantumRealizableError(ValueError):
    """A noisy-PR weight above 1/sqrt(2) has no Werner-state visibility."""


def _unit_interval(p, name: str) -> Fraction:
    p = to_fraction(p)
    if not 0 <= p <= 1:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")
    return p


# -- noisy PR family ---------------------------------------------------------

def noisy_pr(alpha: int, beta: int, gamma: int, p_pr) -> Box:
    """``p_pr * PR_abc + (1 - p_pr) * P_N``."""
    p = _unit_interval(p_pr, "p_pr")
    return mix([(p, make_pr(alpha, beta, gamma)), (1 - p, maximally_mixed())])


def match_noisy_pr(b: Box):
    """Return ``(label, p_pr)`` if ``b`` is exactly a noisy PR box, else ``None``.

    ``P_N`` itself matches with label ``(0, 0, 0)`` and weight 0.
    """
    # entries of p PR + (1-p) P_N are (1+p)/4 on the PR support, (1-p)/4 off it
    for labels in itertools.product(BITS, repeat=3):
        p = 4 * b[0, 0, 0, labels[2]] - 1
        if 0 <= p <= 1 and noisy_pr(*labels, p) == b:
            return labels, p
    return None


@dataclass(frozen=True)
class Thresholds:
    bell_nonlocal: bool
    entanglement_certified: bool
    quantum_realizable: bool
    drn_present: bool


def thresholds(p_pr) -> Thresholds:
    """Regime flags for a noisy PR box, decided exactly (squares vs 1/8, 1/2)."""
    p = _unit_interval(p_pr, "p_pr")
    return Thresholds(
        bell_nonlocal=p > Fraction(1, 2),
        entanglement_certified=p > 0 and p * p > Fraction(1, 8),
        quantum_realizable=p * p <= Fraction(1, 2),
        drn_present=p > 0,
    )


def werner_to_ppr(w) -> float:
    if not 0 <= w <= 1:
        raise ValueError(f"visibility must lie in [0, 1], got {w}")
    return float(w) / SQRT2


def ppr_to_werner(p_pr) -> float:
    if p_pr < 0:
        raise ValueError("p_pr must be nonnegative")
    exact = isinstance(p_pr, (int, Fraction))
    if (exact and Fraction(p_pr) ** 2 > Fraction(1, 2)) or (not exact and p_pr * SQRT2 > 1):
        raise NotQuantumRealizableError(f"p_pr = {p_pr} exceeds 1/sqrt(2)")
    return float(p_pr) * SQRT2


# -- protocol and information quantities ---------------------------------------

def protocol_transform(b: Box) -> tuple[tuple[Fraction, Fraction], tuple[Fraction, Fraction]]:
    """Joint ``P(a, b')`` with ``b' = b ^ x*y``, inputs uniform over the four pairs."""
    quarter = Fraction(1, 4)
    return tuple(tuple(quarter * sum((b[x, y, a, bp ^ (x * y)] for x in BITS for y in BITS),
                                     Fraction(0))
                       for bp in BITS) for a in BITS)


def binary_entropy(q) -> float:
    q = float(q)
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"probability must lie in [0, 1], got {q}")
    if q in (0.0, 1.0):
        return 0.0
    return -q * math.log2(q) - (1 - q) * math.log2(1 - q)


def mutual_information(joint) -> float:
    """``I(A:B)`` in bits of a 2x2 joint distribution."""
    j = np.asarray([[float(v) for v in row] for row in joint])
    pa = j.sum(axis=1)
    pb = j.sum(axis=0)
    total = 0.0
    for a in BITS:
        for b in BITS:
            if j[a, b] > 0:
                total += j[a, b] * math.log2(j[a, b] / (pa[a] * pb[b]))
    return min(max(total, 0.0), 1.0)


def key_rate_closed_form(p_pr) -> float:
    """``1 - h((1 - p)/2)``, the protocol's I(A:B) on a noisy PR box."""
    return 1.0 - binary_entropy((1.0 - float(p_pr)) / 2.0)


def werner_key_rate(w) -> float:
    """``1 - h((1 - W/sqrt2)/2)``."""
    return 1.0 - binary_entropy(0.5 * (1.0 - float(w) / SQRT2))


@dataclass(frozen=True)
class KeyRateResult:
    i_ab: float
    i_ae_assumed_zero: bool
    key_rate_lower_bound: float
    nl_gate: Fraction
    i_ae_declared: float | None = None

    @property
    def general_bound(self) -> float | None:
        """``I(A:B) - I(A:E)`` when an ``I(A:E)`` value was supplied."""
        if self.i_ae_declared is None:
            return None
        return self.i_ab - self.i_ae_declared


def key_rate(b: Box, i_ae: float | None = None) -> KeyRateResult:
    """One-way key-rate bound of the CHSH protocol on ``b``.

    With ``NL > 0`` the Eve information is taken to be zero and the bound is
    ``I(A:B)``.  Otherwise the bound is ``I(A:B) - i_ae`` when ``i_ae`` is
    given and 0 (no certificate) when it is not.
    """
    i_ab = mutual_information(protocol_transform(b))
    gate = nl(b).nl
    gated = gate > 0
    if gated:
        bound = i_ab
    elif i_ae is not None:
        bound = i_ab - i_ae
    else:
        bound = 0.0
    return KeyRateResult(i_ab, gated, bound, gate, i_ae)


# -- Eve extensions ------------------------------------------------------------

@dataclass(frozen=True)
class TripartiteBox:
    """``P(abe|A_x B_y E_z)`` indexed ``q[x][y][z][a][b][e]``."""

    n_e_inputs: int
    q: tuple

    def __post_init__(self):
        if self.n_e_inputs < 1:
            raise ValueError("Eve needs at least one input")
        q = tuple(tuple(tuple(
            tuple(tuple(tuple(to_fraction(self.q[x][y][z][a][b][e]) for e in BITS)
                        for b in BITS) for a in BITS)
            for z in range(self.n_e_inputs)) for y in BITS) for x in BITS)
        object.__setattr__(self, "q", q)

    @classmethod
    def from_function(cls, n_e_inputs: int, f: Callable) -> "TripartiteBox":
        return cls(n_e_inputs, tuple(tuple(tuple(tuple(tuple(tuple(
            f(x, y, z, a, b, e) for e in BITS) for b in BITS) for a in BITS)
            for z in range(n_e_inputs)) for y in BITS) for x in BITS))

    def __getitem__(self, idx):
        x, y, z, a, b, e = idx
        return self.q[x][y][z][a][b][e]

    def indices(self):
        return itertools.product(BITS, BITS, range(self.n_e_inputs), BITS, BITS, BITS)

    def ab_marginal(self, z: int = 0) -> Box:
        return Box.from_function(lambda x, y, a, b: self[x, y, z, a, b, 0] + self[x, y, z, a, b, 1])

    def eve_marginal(self, z: int, e: int) -> Fraction:
        return sum((self[0, 0, z, a, b, e] for a in BITS for b in BITS), Fraction(0))


@dataclass(frozen=True)
class TripartiteReport:
    negative: tuple
    unnormalized: tuple
    signaling: dict  # party -> violating index tuples

    @property
    def nonsignaling(self) -> bool:
        return not any(self.signaling.values())

    @property
    def ok(self) -> bool:
        return not self.negative and not self.unnormalized and self.nonsignaling


def validate_tripartite(t: TripartiteBox) -> TripartiteReport:
    """Exact nonnegativity, normalization and nonsignaling in all directions."""
    nz = range(t.n_e_inputs)
    negative = tuple(idx for idx in t.indices() if t[idx] < 0)
    unnormalized = tuple(
        (x, y, z) for x in BITS for y in BITS for z in nz
        if sum(t[x, y, z, a, b, e] for a in BITS for b in BITS for e in BITS) != 1)

    def alice_sum(x, y, z, b, e):
        return t[x, y, z, 0, b, e] + t[x, y, z, 1, b, e]

    def bob_sum(x, y, z, a, e):
        return t[x, y, z, a, 0, e] + t[x, y, z, a, 1, e]

    def eve_sum(x, y, z, a, b):
        return t[x, y, z, a, b, 0] + t[x, y, z, a, b, 1]

    signaling = {
        "alice": tuple((y, z, b, e) for y in BITS for z in nz for b in BITS for e in BITS
                       if alice_sum(0, y, z, b, e) != alice_sum(1, y, z, b, e)),
        "bob": tuple((x, z, a, e) for x in BITS for z in nz for a in BITS for e in BITS
                     if bob_sum(x, 0, z, a, e) != bob_sum(x, 1, z, a, e)),
        "eve": tuple((x, y, z, a, b) for x in BITS for y in BITS for z in nz
                     for a in BITS for b in BITS if eve_sum(x, y, z, a, b) != eve_sum(x, y, 0, a, b)),
    }
    return TripartiteReport(negative, unnormalized, signaling)


def extend_with_dim2_eve(m: Dim2LocalModel) -> TripartiteBox:
    """Eve holds the hidden value: ``q[x][y][0][a][b][e] = w_e A_e(a|x) B_e(b|y)``."""
    if not m.exact:
        m = m.rationalize()
    w, A, B = m.weights, m.alice, m.bob
    return TripartiteBox.from_function(1, lambda x, y, z, a, b, e: w[e] * A[e][x][a] * B[e][y][b])


def product_extension(b: Box, eve: list[tuple]) -> TripartiteBox:
    """``b`` tensored with Eve's independent distributions ``eve[z][e]``."""
    eve = [[to_fraction(v) for v in row] for row in eve]
    return TripartiteBox.from_function(len(eve), lambda x, y, z, a, bb, e: b[x, y, a, bb] * eve[z][e])


@dataclass(frozen=True)
class FactorizationReport:
    marginal_violations: tuple  # (x, y, z, a, b)
    factor_violations: tuple  # (x, y, z, a, b, e)

    @property
    def marginal_ok(self) -> bool:
        return not self.marginal_violations

    @property
    def factorizes(self) -> bool:
        return not self.factor_violations

    @property
    def ok(self) -> bool:
        return self.marginal_ok and self.factorizes


def check_factorization(t: TripartiteBox, b: Box) -> FactorizationReport:
    """Exact test of ``sum_e q = P`` and ``q = P(ab|xy) P(e|z)`` for every ``z``."""
    marg, fac = [], []
    for z in range(t.n_e_inputs):
        pe = [t.eve_marginal(z, e) for e in BITS]
        for x, y, a, bb in itertools.product(BITS, repeat=4):
            if t[x, y, z, a, bb, 0] + t[x, y, z, a, bb, 1] != b[x, y, a, bb]:
                marg.append((x, y, z, a, bb))
            for e in BITS:
                if t[x, y, z, a, bb, e] != b[x, y, a, bb] * pe[e]:
                    fac.append((x, y, z, a, bb, e))
    return FactorizationReport(tuple(marg), tuple(fac))


TRIPARTITE_FORMAT = "nsbox3/1"


def tripartite_to_dict(t: TripartiteBox) -> dict:
    def fmt(v):
        if isinstance(v, tuple):
            return [fmt(u) for u in v]
        return format_fraction(v)

    return {"format": TRIPARTITE_FORMAT, "inputs": [2, 2], "outputs": [2, 2],
            "eve_inputs": t.n_e_inputs, "q": fmt(t.q)}


def write_tripartite(t: TripartiteBox) -> str:
    return json.dumps(tripartite_to_dict(t), indent=1) + "\n"


def read_tripartite(text: str) -> TripartiteBox:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BoxFormatError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} col {exc.colno}") from None
    if not isinstance(doc, dict):
        raise BoxFormatError("document must be an object")
    if doc.get("format") != TRIPARTITE_FORMAT:
        raise BoxFormatError(f"format must be {TRIPARTITE_FORMAT!r}", "$.format")
    nz = doc.get("eve_inputs")
    if isinstance(nz, bool) or not isinstance(nz, int) or nz < 1:
        raise BoxFormatError("expected a positive integer", "$.eve_inputs")
    if "q" not in doc:
        raise BoxFormatError("missing field", "$.q")
    return TripartiteBox(nz, parse_table(doc["q"], (2, 2, nz, 2, 2, 2), "$.q"))


# -- Monte Carlo simulation ----------------------------------------------------

OUTCOMES = tuple(itertools.product(BITS, repeat=2))  # (a, b) in row-major order


def _i_ab_float(p) -> float:
    p = np.asarray(p, dtype=float)
    joint = np.zeros((2, 2))
    for x, y, a, bp in itertools.product(BITS, repeat=4):
        joint[a, bp] += 0.25 * p[x, y, a, bp ^ (x * y)]
    return mutual_information(joint)


def delta_method_se(f: Callable, counts: np.ndarray, h: float = 1e-6) -> float:
    """Standard error of ``f(empirical box)`` under per-input-pair multinomial sampling.

    The gradient is taken by central differences on the raw table entries.
    """
    n_xy = counts.sum(axis=(2, 3))
    p = counts / n_xy[:, :, None, None]
    var = 0.0
    for x, y in itertools.product(BITS, repeat=2):
        g = np.zeros((2, 2))
        for a, b in OUTCOMES:
            up, down = p.copy(), p.copy()
            up[x, y, a, b] += h
            down[x, y, a, b] -= h
            g[a, b] = (f(up) - f(down)) / (2 * h)
        pxy = p[x, y]
        var += (np.sum(g * g * pxy) - np.sum(g * pxy) ** 2) / n_xy[x, y]
    return math.sqrt(max(var, 0.0))


@dataclass(frozen=True)
class SimTranscript:
    """Record of one simulated run.

    Inputs come from substream 0 and outcomes from substream 1 of
    ``SeedSequence(seed)`` driving numpy's PCG64 generator.
    """

    seed: int
    rounds: int
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    counts: np.ndarray = field(repr=False)  # counts[x][y][a][b]
    box: Box | None
    nl_report: NlReport | None
    key: KeyRateResult | None

    @property
    def missing_pairs(self) -> list[tuple[int, int]]:
        return [(x, y) for x in BITS for y in BITS if self.counts[x, y].sum() == 0]

    def records_bytes(self) -> bytes:
        return np.stack([self.x, self.y, self.a, self.b]).astype(np.uint8).tobytes()

    def nl_standard_error(self) -> float:
        return delta_method_se(nl_value_float, self.counts)

    def i_ab_standard_error(self) -> float:
        return delta_method_se(_i_ab_float, self.counts)


def simulate_protocol(b: Box, rounds: int, seed: int = 0) -> SimTranscript:
    """Draw uniform inputs, sample outcomes from ``b``, and summarize."""
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    input_stream, output_stream = (np.random.Generator(np.random.PCG64(s))
                                   for s in np.random.SeedSequence(seed).spawn(2))
    xs = input_stream.integers(0, 2, size=rounds, dtype=np.uint8)
    ys = input_stream.integers(0, 2, size=rounds, dtype=np.uint8)
    u = output_stream.random(rounds)

    # cumulative outcome probabilities per input pair, outcomes in (a, b) order
    cdf = np.array([[np.cumsum([float(b[x, y, a, bb]) for a, bb in OUTCOMES]) for y in BITS]
                    for x in BITS])
    cdf[:, :, -1] = 1.0
    pair_cdf = cdf[xs, ys]
    outcome = (u[:, None] >= pair_cdf).sum(axis=1).clip(0, 3)
    a_out = (outcome >> 1).astype(np.uint8)
    b_out = (outcome & 1).astype(np.uint8)

    flat = ((xs.astype(np.int64) * 2 + ys) * 2 + a_out) * 2 + b_out
    counts = np.bincount(flat, minlength=16).reshape(2, 2, 2, 2)

    emp_box = report = key = None
    n_xy = counts.sum(axis=(2, 3))
    if np.all(n_xy > 0):
        emp_box = Box.from_function(
            lambda x, y, a, bb: Fraction(int(counts[x, y, a, bb]), int(n_xy[x, y])))
        report = nl(emp_box)
        key = key_rate(emp_box)
    return SimTranscript(seed, rounds, xs, ys, a_out, b_out, counts, emp_box, report, key)
