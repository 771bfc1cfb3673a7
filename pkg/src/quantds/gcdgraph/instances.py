"""Seeded GCD-graph instances for tests and command-line runs."""

from __future__ import annotations

from fractions import Fraction

from ..approx import ApproxFunction
from ..bilinear import weight
from ..numthy import D_value
from ..rng import SplitMix64
from .graph import DEFAULT_TAU, GcdGraph, new_graph

SMALL_PRIMES = (2, 3, 5, 7)
LARGE_PRIMES = (100003, 100019, 100043)


class _Draw:
    def __init__(self, seed: int):
        self.rng = SplitMix64(seed)

    def below(self, n: int) -> int:
        return self.rng.next() % n

    def chance(self, num: int, den: int) -> bool:
        return self.rng.next() % den < num


def _vertex(d: _Draw, small, large, max_exp: int, large_num: int, large_den: int) -> int:
    n = 1
    for p in small:
        n *= p ** d.below(max_exp + 1)
    if large and d.chance(large_num, large_den):
        n *= large[d.below(len(large))]
    return n


def random_graph(seed: int, n_v: int = 8, n_w: int = 8, small=SMALL_PRIMES, large=LARGE_PRIMES,
                 max_exp: int = 2, edge_num: int = 1, edge_den: int = 2, large_num: int = 1,
                 large_den: int = 3, tau=DEFAULT_TAU) -> GcdGraph:
    """Vertices are products of small prime powers times, sometimes, one large prime.

    Weights are k/8 with k in 1..8, each possible edge is present with
    probability edge_num/edge_den; P is empty.  At least one edge is present.
    """
    d = _Draw(seed)
    V, W = set(), set()
    while len(V) < n_v:
        V.add(_vertex(d, small, large, max_exp, large_num, large_den))
    while len(W) < n_w:
        W.add(_vertex(d, small, large, max_exp, large_num, large_den))
    mu = {n: Fraction(1 + d.below(8), 8) for n in sorted(V | W)}
    E = [(v, w) for v in sorted(V) for w in sorted(W) if d.chance(edge_num, edge_den)]
    if not E:
        E = [(min(V), min(W))]
    return new_graph(mu, V, W, E, (), None, None, tau)


def random_partition(seed: int, items, parts: int):
    """Split the sorted items into ``parts`` non-empty blocks (fewer if there are fewer items)."""
    items = sorted(items)
    d = _Draw(seed)
    parts = max(1, min(parts, len(items)))
    labels = list(range(parts)) + [d.below(parts) for _ in range(len(items) - parts)]
    for i in range(len(labels) - 1, 0, -1):
        j = d.below(i + 1)
        labels[i], labels[j] = labels[j], labels[i]
    blocks = [[] for _ in range(parts)]
    for x, lab in zip(items, labels):
        blocks[lab].append(x)
    return [b for b in blocks if b]


def bilinear_graph(Q: int, psi: ApproxFunction, y, tau=DEFAULT_TAU) -> GcdGraph:
    """V = W = [1, Q] with mu(q) = phi(q) psi(q)/q and an edge when D(q, r) <= y."""
    y = Fraction(y)
    qs = list(range(1, Q + 1))
    mu = {q: weight(q, psi) for q in qs}
    E = [(q, r) for q in qs for r in qs if D_value(q, r, psi) <= y]
    return new_graph(mu, qs, qs, E, (), None, None, tau)


def diagonal_graph(tau=DEFAULT_TAU) -> GcdGraph:
    return new_graph(1, {2, 3}, {2, 3}, {(2, 2), (3, 3)}, tau=tau)

