"""Seeded property suites for the GCD-graph steps.

Instance i of a suite is built from ``child_seed(seed, i)`` alone, so the
rows do not depend on how instances are spread over worker processes.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

from ..errors import DomainError, LemmaViolation
from ..numthy import factorize
from ..rng import SplitMix64, child_seed
from .constants import toy_profile
from .graph import R_set, class_tally, induced_subgraph, log_quality, quality_ratio_identity_check
from .instances import random_graph, random_partition
from .iteration import reduce_to_empty_R
from .lemmas import LOG_TOL, degree_violations, edge_sets_witness, high_degree_refine, pigeonhole_select

SUITES = ("ratio", "witness", "refine", "pigeonhole", "reduce")
WITNESS_TAUS = (Fraction(1, 1000), Fraction(1, 200), Fraction(9, 1000))


@dataclass(frozen=True)
class SuiteRow:
    suite: str
    instance: int
    seed: int
    size: str
    ok: bool
    detail: str


def _pick(rng: SplitMix64, seq):
    seq = sorted(seq)
    return seq[rng.next() % len(seq)]


def _primes_of(G):
    out = set()
    for n in G.V | G.W:
        out.update(factorize(n).primes)
    return out - G.P


def _ratio(i, s):
    rng = SplitMix64(s)
    n = 3 + rng.next() % 10
    G = random_graph(s, n, n)
    if rng.next() % 2:
        # put a prime into P first so the prime factors of q take part
        T = class_tally(G, 2)
        blocks = [kl for kl, m in T.E.items() if m]
        if blocks:
            G = induced_subgraph(G, 2, *_pick(rng, blocks))
    p = _pick(rng, _primes_of(G))
    T = class_tally(G, p)
    k = _pick(rng, [a for a, m in T.V.items() if m])
    l = _pick(rng, [b for b, m in T.W.items() if m])
    chk = quality_ratio_identity_check(G, p, k, l)
    exact = "n/a" if chk.exact_equal is None else str(chk.exact_equal).lower()
    return SuiteRow("ratio", i, s, f"{len(G.V)}x{len(G.W)}", chk.passed,
                    f"p={p} k={k} l={l} err={chk.error:.3e} exact={exact}")


def _witness(i, s):
    rng = SplitMix64(s)
    tau = WITNESS_TAUS[i % len(WITNESS_TAUS)]
    n = 3 + rng.next() % 12
    G = random_graph(s, n, n, tau=tau)
    retry = 0
    while not R_set(G):  # redraw until some prime divides an edge gcd
        retry += 1
        G = random_graph(child_seed(s, retry), n, n, tau=tau)
    R = R_set(G)
    size = f"{n}x{n}"
    p = _pick(rng, R)
    try:
        w = edge_sets_witness(G, p)
    except LemmaViolation as exc:
        return SuiteRow("witness", i, s, size, False, f"tau={tau} p={p} lemma violation: {exc}")
    return SuiteRow("witness", i, s, size, True,
                    f"tau={tau} p={p} k={w.k} l={w.l} {w.branch} slack={w.log_slack:.6g}")


def _refine(i, s):
    n = 3 + s % 20
    G = random_graph(s, n, n)
    res = high_degree_refine(G)
    bad = degree_violations(res.graph)
    lq0, lq1 = res.log_q_before, res.log_q_after
    ok = not bad and lq1 >= lq0 - LOG_TOL * max(1.0, abs(lq0))
    return SuiteRow("refine", i, s, f"{n}x{n}", ok,
                    f"removed={len(res.removed)} log_q={lq0:.9g}->{lq1:.9g} low_degree={len(bad)}")


def _pigeonhole(i, s):
    rng = SplitMix64(s)
    n = 4 + rng.next() % 16
    G = random_graph(s, n, n)
    I, J = 1 + rng.next() % 4, 1 + rng.next() % 4
    Vp = random_partition(child_seed(s, 1), G.V, I)
    Wp = random_partition(child_seed(s, 2), G.W, J)
    try:
        res = pigeonhole_select(G, Vp, Wp)
    except LemmaViolation as exc:
        return SuiteRow("pigeonhole", i, s, f"{n}x{n}", False, str(exc))
    gain = log_quality(res.graph) - log_quality(G)
    return SuiteRow("pigeonhole", i, s, f"{n}x{n}", res.quality_bound_ok and res.density_bound_ok,
                    f"I={len(Vp)} J={len(Wp)} block=({res.i},{res.j}) log_gain={gain:.9g}")


def _reduce(i, s):
    n = 5 + i % 46
    G = random_graph(s, n, n)
    res = reduce_to_empty_R(G, toy_profile())
    ok = res.gcd_ok and res.bound_ok and not R_set(res.graph)
    detail = (f"steps={len(res.trace.steps)} log_q={res.log_q_initial:.9g}->{res.log_q_final:.9g} "
              f"a={res.a} b={res.b} findings={len(res.trace.findings)}")
    return SuiteRow("reduce", i, s, f"{n}x{n}", ok, detail)


_RUNNERS = {"ratio": _ratio, "witness": _witness, "refine": _refine, "pigeonhole": _pigeonhole, "reduce": _reduce}


def _one(args):
    suite, i, seed = args
    s = child_seed(seed, i)
    try:
        return _RUNNERS[suite](i, s)
    except (DomainError, LemmaViolation) as exc:
        return SuiteRow(suite, i, s, "-", False, f"{type(exc).__name__}: {exc}".splitlines()[0])


def run_suite(suite: str, count: int, seed: int = 1, workers: int = 1) -> list[SuiteRow]:
    if suite not in _RUNNERS:
        raise DomainError(f"unknown suite {suite!r}")
    jobs = [(suite, i, seed) for i in range(count)]
    if workers <= 1:
        return [_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_one, jobs, chunksize=max(1, math.ceil(count / (4 * workers)))))
