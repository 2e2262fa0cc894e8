"""Seeded random boxes with exact rational entries.

Weights are drawn as positive integers and normalized, so every sampled box
lies in the nonsignaling polytope by construction.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .box import VERTEX_IDS, Box, Mixture, mix, product_box

DEFAULT_SCALE = 1000


def make_rng(seed=None) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def random_weights(rng: np.random.Generator, n: int, scale: int = DEFAULT_SCALE) -> list[Fraction]:
    raw = [int(v) for v in rng.integers(1, scale + 1, size=n)]
    total = sum(raw)
    return [Fraction(v, total) for v in raw]


def random_mixture(rng=None, sparse: bool | None = None, scale: int = DEFAULT_SCALE) -> Mixture:
    """Random convex weights over the 24 vertices.

    With ``sparse=True`` the support is a random subset of 1 to 6 vertices,
    which reaches the faces and nonlocal corners of the polytope that a
    full-support mixture almost never visits.  ``None`` picks either form
    with equal probability.
    """
    rng = make_rng(rng)
    if sparse is None:
        sparse = bool(rng.integers(2))
    if sparse:
        k = int(rng.integers(1, 7))
        support = sorted(int(i) for i in rng.choice(len(VERTEX_IDS), size=k, replace=False))
    else:
        support = list(range(len(VERTEX_IDS)))
    w = random_weights(rng, len(support), scale)
    ids = tuple(VERTEX_IDS[i] for i in support)
    return Mixture(tuple(zip(w, (v.box() for v in ids))), ids)


def random_box(rng=None, sparse: bool | None = None, scale: int = DEFAULT_SCALE) -> Box:
    return mix(random_mixture(rng, sparse, scale))


def random_response(rng, scale: int = DEFAULT_SCALE) -> list[list[Fraction]]:
    """Response table ``t[input][output]`` with rational entries."""
    table = []
    for _ in range(2):
        k = int(rng.integers(0, scale + 1))
        table.append([Fraction(k, scale), Fraction(scale - k, scale)])
    return table


def random_product_box(rng=None, scale: int = DEFAULT_SCALE) -> Box:
    rng = make_rng(rng)
    return product_box(random_response(rng, scale), random_response(rng, scale))
