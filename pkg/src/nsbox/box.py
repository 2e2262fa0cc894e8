"""Exact data model for two-party, two-input, two-output boxes.

A box is the table of conditional probabilities ``P(ab|A_x B_y)`` stored as
``fractions.Fraction`` values indexed ``p[x][y][a][b]``.  The module also
provides the 16 deterministic and 8 PR vertices of the nonsignaling polytope,
the local relabeling group, convex mixing and the ``nsbox/1`` text format.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property, lru_cache
from typing import Callable, Iterable, Iterator, Sequence

BITS = (0, 1)
INDICES = tuple(itertools.product(BITS, repeat=4))

FORMAT = "nsbox/1"


class InvalidMixtureError(ValueError):
    """Mixture weights are negative or do not sum to one."""


class BoxFormatError(ValueError):
    """An ``nsbox/1`` document could not be parsed."""

    def __init__(self, message: str, location: str = "$"):
        super().__init__(f"{location}: {message}")
        self.location = location


def to_fraction(value) -> Fraction:
    """Convert ints, Fractions, rational strings and decimal strings exactly.

    Floats are converted through their exact binary value.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not probabilities")
    if isinstance(value, (int, float)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"cannot convert {type(value).__name__} to a rational")


@dataclass(frozen=True)
class Box:
    """Conditional distribution ``P(ab|A_x B_y)`` with exact entries.

    Construction does not enforce validity; use :func:`validate`.
    """

    p: tuple  # p[x][y][a][b]

    def __post_init__(self):
        rows = tuple(
            tuple(
                tuple(tuple(to_fraction(self.p[x][y][a][b]) for b in BITS) for a in BITS)
                for y in BITS
            )
            for x in BITS
        )
        object.__setattr__(self, "p", rows)

    @classmethod
    def from_function(cls, f: Callable[[int, int, int, int], object]) -> "Box":
        return cls(tuple(tuple(tuple(tuple(f(x, y, a, b) for b in BITS)
                                     for a in BITS) for y in BITS) for x in BITS))

    @classmethod
    def from_flat(cls, values: Sequence) -> "Box":
        """Build from 16 values in ``(x, y, a, b)`` lexicographic order."""
        if len(values) != 16:
            raise ValueError("expected 16 entries")
        lookup = dict(zip(INDICES, values))
        return cls.from_function(lambda x, y, a, b: lookup[x, y, a, b])

    def __getitem__(self, idx):
        if isinstance(idx, tuple):
            x, y, a, b = idx
            return self.p[x][y][a][b]
        return self.p[idx]

    def flat(self) -> tuple[Fraction, ...]:
        return tuple(self.p[x][y][a][b] for x, y, a, b in INDICES)

    def items(self) -> Iterator[tuple[tuple[int, int, int, int], Fraction]]:
        for idx in INDICES:
            yield idx, self[idx]

    def to_float(self):
        import numpy as np

        return np.array([[[[float(v) for v in row] for row in pa] for pa in px]
                         for px in self.p])

    def alice_marginal(self, x: int, y: int, a: int) -> Fraction:
        return sum(self.p[x][y][a], Fraction(0))

    def bob_marginal(self, x: int, y: int, b: int) -> Fraction:
        return self.p[x][y][0][b] + self.p[x][y][1][b]

    def __add__(self, other: "Box") -> "Box":
        return Box.from_function(lambda *i: self[i] + other[i])

    def __sub__(self, other: "Box") -> "Box":
        return Box.from_function(lambda *i: self[i] - other[i])

    def scale(self, c) -> "Box":
        c = to_fraction(c)
        return Box.from_function(lambda *i: c * self[i])


@dataclass(frozen=True, order=True)
class VertexId:
    """Label of a polytope vertex: ``det`` with 4 bits or ``pr`` with 3 bits."""

    kind: str
    labels: tuple[int, ...]

    def __post_init__(self):
        want = {"det": 4, "pr": 3}.get(self.kind)
        if want is None:
            raise ValueError(f"unknown vertex kind {self.kind!r}")
        if len(self.labels) != want or any(v not in BITS for v in self.labels):
            raise ValueError(f"{self.kind} vertex needs {want} bit labels, got {self.labels}")

    def box(self) -> Box:
        if self.kind == "det":
            return make_deterministic(*self.labels)
        return make_pr(*self.labels)

    def __str__(self) -> str:
        return f"{self.kind}:{''.join(map(str, self.labels))}"

    @classmethod
    def parse(cls, text: str) -> "VertexId":
        kind, _, bits = text.partition(":")
        return cls(kind, tuple(int(c) for c in bits))


@lru_cache(maxsize=None)
def make_deterministic(alpha: int, beta: int, gamma: int, eps: int) -> Box:
    """Deterministic box with ``a = alpha*x ^ beta`` and ``b = gamma*y ^ eps``."""
    for v in (alpha, beta, gamma, eps):
        if v not in BITS:
            raise ValueError("labels must be bits")
    return Box.from_function(
        lambda x, y, a, b: int(a == (alpha * x) ^ beta and b == (gamma * y) ^ eps))


@lru_cache(maxsize=None)
def make_pr(alpha: int, beta: int, gamma: int) -> Box:
    """PR box with weight 1/2 on ``a ^ b == x*y ^ alpha*x ^ beta*y ^ gamma``."""
    for v in (alpha, beta, gamma):
        if v not in BITS:
            raise ValueError("labels must be bits")
    half = Fraction(1, 2)
    return Box.from_function(
        lambda x, y, a, b: half if a ^ b == (x * y) ^ (alpha * x) ^ (beta * y) ^ gamma else 0)


@lru_cache(maxsize=None)
def maximally_mixed() -> Box:
    quarter = Fraction(1, 4)
    return Box.from_function(lambda *_: quarter)


DET_IDS = tuple(VertexId("det", labels) for labels in itertools.product(BITS, repeat=4))
PR_IDS = tuple(VertexId("pr", labels) for labels in itertools.product(BITS, repeat=3))
VERTEX_IDS = DET_IDS + PR_IDS


def product_box(alice: Sequence[Sequence], bob: Sequence[Sequence]) -> Box:
    """``P(a|A_x) P(b|B_y)`` from response tables ``alice[x][a]``, ``bob[y][b]``."""
    alice = [[to_fraction(v) for v in row] for row in alice]
    bob = [[to_fraction(v) for v in row] for row in bob]
    return Box.from_function(lambda x, y, a, b: alice[x][a] * bob[y][b])


# -- mixtures ----------------------------------------------------------------

@dataclass(frozen=True)
class Mixture:
    """Convex combination ``sum_i w_i B_i``; labels are optional annotations."""

    components: tuple[tuple[Fraction, Box], ...]
    labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        comps = tuple((to_fraction(w), b) for w, b in self.components)
        object.__setattr__(self, "components", comps)

    @property
    def weights(self) -> tuple[Fraction, ...]:
        return tuple(w for w, _ in self.components)

    def check(self) -> None:
        if any(w < 0 for w in self.weights):
            raise InvalidMixtureError("negative mixture weight")
        total = sum(self.weights, Fraction(0))
        if total != 1:
            raise InvalidMixtureError(f"mixture weights sum to {total}, not 1")


def mix(m: Mixture | Iterable[tuple[object, Box]]) -> Box:
    """Entrywise convex combination of the components of ``m``."""
    if not isinstance(m, Mixture):
        m = Mixture(tuple(m))
    m.check()
    acc = [Fraction(0)] * 16
    for w, b in m.components:
        if w:
            for k, v in enumerate(b.flat()):
                acc[k] += w * v
    return Box.from_flat(acc)


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    negative: tuple[tuple[int, int, int, int], ...]
    unnormalized: tuple[tuple[int, int], ...]
    signaling_a_to_b: tuple[tuple[int, int], ...]  # (y, b) where Bob's marginal depends on x
    signaling_b_to_a: tuple[tuple[int, int], ...]  # (x, a) where Alice's marginal depends on y

    @property
    def nonnegative(self) -> bool:
        return not self.negative

    @property
    def normalized(self) -> bool:
        return not self.unnormalized

    @property
    def nonsignaling(self) -> bool:
        return not self.signaling_a_to_b and not self.signaling_b_to_a

    @property
    def ok(self) -> bool:
        return self.nonnegative and self.normalized and self.nonsignaling

    def failures(self) -> list[str]:
        out = []
        if self.negative:
            out.append(f"negative entries at {list(self.negative)}")
        if self.unnormalized:
            out.append(f"unnormalized input pairs {list(self.unnormalized)}")
        if self.signaling_a_to_b:
            out.append(f"Bob marginal depends on x at (y,b) {list(self.signaling_a_to_b)}")
        if self.signaling_b_to_a:
            out.append(f"Alice marginal depends on y at (x,a) {list(self.signaling_b_to_a)}")
        return out


def validate(b: Box) -> ValidationReport:
    """Exact check of nonnegativity, normalization and nonsignaling."""
    negative = tuple(idx for idx, v in b.items() if v < 0)
    unnormalized = tuple((x, y) for x in BITS for y in BITS
                         if sum(b.flat()[8 * x + 4 * y: 8 * x + 4 * y + 4]) != 1)
    a_to_b = tuple((y, bb) for y in BITS for bb in BITS
                   if b.bob_marginal(0, y, bb) != b.bob_marginal(1, y, bb))
    b_to_a = tuple((x, a) for x in BITS for a in BITS
                   if b.alice_marginal(x, 0, a) != b.alice_marginal(x, 1, a))
    return ValidationReport(negative, unnormalized, a_to_b, b_to_a)


# -- relabeling group --------------------------------------------------------

@dataclass(frozen=True, order=True)
class Relabeling:
    """Local relabeling of inputs and outputs, optionally exchanging parties.

    The action is ``(g.P)[x][y][a][b] = P[x'][y'][a'][b']`` with
    ``x' = x ^ swap_a`` and ``a' = a ^ flip_a[x]`` (same for Bob), followed by
    exchanging the roles of Alice and Bob when ``exchange`` is set.
    """

    swap_a: int = 0
    flip_a: tuple[int, int] = (0, 0)
    swap_b: int = 0
    flip_b: tuple[int, int] = (0, 0)
    exchange: int = 0

    def source_index(self, x: int, y: int, a: int, b: int) -> tuple[int, int, int, int]:
        if self.exchange:
            x, y, a, b = y, x, b, a
        return (x ^ self.swap_a, y ^ self.swap_b, a ^ self.flip_a[x], b ^ self.flip_b[y])

    @cached_property
    def index_map(self) -> tuple[tuple[int, int, int, int], ...]:
        return tuple(self.source_index(*idx) for idx in INDICES)

    def compose(self, other: "Relabeling") -> "Relabeling":
        """Return ``self . other`` so that applying it equals ``other`` then ``self``."""
        mine = dict(zip(INDICES, self.index_map))
        theirs = dict(zip(INDICES, other.index_map))
        table = tuple(theirs[mine[idx]] for idx in INDICES)
        return _relabeling_by_map()[table]

    def inverse(self) -> "Relabeling":
        mine = dict(zip(INDICES, self.index_map))
        inv = {v: k for k, v in mine.items()}
        return _relabeling_by_map()[tuple(inv[idx] for idx in INDICES)]

    @property
    def is_identity(self) -> bool:
        return self.index_map == INDICES


def apply_relabeling(g: Relabeling, b: Box) -> Box:
    return Box.from_function(lambda *idx: b[g.source_index(*idx)])


def enumerate_relabelings(include_party_swap: bool = False) -> list[Relabeling]:
    """All group elements: 64 local ones, 128 with party exchange."""
    per_party = [(s, (f0, f1)) for s in BITS for f0 in BITS for f1 in BITS]
    exchanges = BITS if include_party_swap else (0,)
    return [Relabeling(sa, fa, sb, fb, ex)
            for ex in exchanges for sa, fa in per_party for sb, fb in per_party]


@lru_cache(maxsize=None)
def _relabeling_by_map() -> dict:
    return {g.index_map: g for g in enumerate_relabelings(include_party_swap=True)}


# -- nsbox/1 serialization ---------------------------------------------------

def format_fraction(v: Fraction) -> str:
    return f"{v.numerator}/{v.denominator}"


def parse_rational(raw, location: str = "$") -> Fraction:
    if isinstance(raw, bool) or not isinstance(raw, (int, str)):
        raise BoxFormatError(f"expected rational string or integer, got {raw!r}", location)
    try:
        return to_fraction(raw)
    except (ValueError, ZeroDivisionError):
        raise BoxFormatError(f"cannot parse rational {raw!r}", location) from None


def parse_table(raw, shape: Sequence[int], location: str):
    """Parse a nested list of the given shape into nested lists of Fractions."""
    if not shape:
        return parse_rational(raw, location)
    if not isinstance(raw, list) or len(raw) != shape[0]:
        raise BoxFormatError(f"expected array of length {shape[0]}", location)
    return [parse_table(item, shape[1:], f"{location}[{i}]") for i, item in enumerate(raw)]


def box_to_dict(b: Box) -> dict:
    return {
        "format": FORMAT,
        "inputs": [2, 2],
        "outputs": [2, 2],
        "p": [[[[format_fraction(v) for v in row] for row in pa] for pa in px] for px in b.p],
    }


def write_box(b: Box) -> str:
    return json.dumps(box_to_dict(b), indent=1) + "\n"


def box_from_dict(doc) -> Box:
    if not isinstance(doc, dict):
        raise BoxFormatError("document must be an object")
    if doc.get("format") != FORMAT:
        raise BoxFormatError(f"format must be {FORMAT!r}", "$.format")
    for key in ("inputs", "outputs"):
        if doc.get(key, [2, 2]) != [2, 2]:
            raise BoxFormatError("only [2, 2] is supported", f"$.{key}")
    if "p" not in doc:
        raise BoxFormatError("missing field", "$.p")
    return Box(parse_table(doc["p"], (2, 2, 2, 2), "$.p"))


def read_box(text: str) -> Box:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise BoxFormatError(f"invalid JSON: {exc.msg}", f"line {exc.lineno} col {exc.colno}") from None
    return box_from_dict(doc)
