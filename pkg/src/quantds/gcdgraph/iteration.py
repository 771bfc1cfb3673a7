"""The density-increment iteration: absorb every prime of R(G) into P.

Pipeline (``reduce_to_empty_R``):

1. ``small_primes_pipeline`` absorbs the primes p <= C6 one at a time,
   losing at most a factor C5 each.
2. While R(G) is non-empty: ``iteration_step1`` if some prime is flat
   (gains M^N), otherwise ``iteration_step2`` (no loss).
3. A final ``high_degree_refine``.

Each step records the factor it guarantees.  A step whose guarantee fails on
the concrete graph records a finding (or raises in strict mode) and the
pipeline continues with the best candidate it found.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import mpmath

from ..errors import DomainError, LemmaViolation, ResourceLimitError
from ..numthy import split_primes, valuation
from .graph import (
    GcdGraph,
    R_set,
    best_offdiagonal,
    class_tally,
    dominant_valuation,
    induced_log_quality,
    induced_subgraph,
    log_quality,
    r_split,
    subgraph,
    to_text,
)
from .lemmas import (
    LOG_TOL,
    edge_mass_dichotomy,
    edge_sets_witness,
    high_degree_refine,
    is_operationally_maximal,
    maximalize,
    no_small_set_edges,
    pigeonhole_select,
    unbalanced_edges,
)


def _tol(x: float) -> float:
    return LOG_TOL * max(1.0, abs(x))


@dataclass
class TraceStep:
    step: int
    rule: str
    primes_added: tuple
    log_q_before: float
    log_q_after: float
    R_before: int
    R_after: int
    guarantee: float  # promised: log_q_after >= log_q_before + guarantee
    ok: bool
    note: str = ""

    def line(self) -> str:
        primes = ",".join(map(str, self.primes_added)) or "-"
        return (f"{self.step} {self.rule} {self.log_q_before:.12g} {self.log_q_after:.12g} "
                f"{self.R_before} {self.R_after} {primes} {self.guarantee:.12g} {'ok' if self.ok else 'FAIL'}")


@dataclass
class IterationTrace:
    steps: list = field(default_factory=list)
    findings: list = field(default_factory=list)
    strict: bool = False

    def record(self, rule, before: GcdGraph, after: GcdGraph, guarantee: float, extra_ok=True, note=""):
        lb, la = log_quality(before), log_quality(after)
        added = tuple(sorted(after.P - before.P))
        ok = bool(extra_ok) and la >= lb + guarantee - _tol(lb)
        st = TraceStep(len(self.steps) + 1, rule, added, lb, la,
                       len(R_set(before)), len(R_set(after)), guarantee, ok, note)
        self.steps.append(st)
        if not ok:
            self.finding(f"step {st.step} ({rule}) missed its guarantee: {note}".rstrip(": "))
        return st

    def finding(self, text: str, graph: GcdGraph | None = None):
        self.findings.append(text)
        if self.strict:
            raise LemmaViolation(text, witness=None if graph is None else to_text(graph))

    def composite_guarantee(self) -> float:
        return sum(s.guarantee for s in self.steps)

    def to_text(self) -> str:
        head = "step rule log_q_before log_q_after R_before R_after primes guarantee status"
        lines = [head] + [s.line() for s in self.steps]
        lines += [f"# finding: {f}" for f in self.findings]
        return "\n".join(lines) + "\n"


def _in_R(G: GcdGraph, p: int) -> bool:
    return p not in G.P and any(math.gcd(v, w) % p == 0 for v, w in G.E)


def _need_positive_density(G: GcdGraph) -> None:
    if G.EI == 0 or G.VI == 0 or G.WI == 0:
        raise DomainError("the step needs edge density > 0")


def _logf(x) -> float:
    with mpmath.workdps(30):
        return float(mpmath.log(mpmath.mpf(x.numerator) / x.denominator if isinstance(x, Fraction) else x))


# main dichotomy --------------------------------------------------------------------

@dataclass
class DichotomyResult:
    branch: str  # "A", "B" or "none"
    k: int | None
    l: int | None
    graph: GcdGraph | None
    log_ratio: float | None
    note: str = ""


def main_dichotomy(G: GcdGraph, p: int, profile) -> DichotomyResult:
    """Either some valuation k of p carries a 1 - C2/p share of both sides
    (branch B), or a maximalised G_{p^k,p^l} has quality >= M^{1_{k != l}} q(G)
    (branch A).  Branch B is tested first; among several k the smallest wins."""
    _need_positive_density(G)
    if not _in_R(G, p):
        raise DomainError(f"{p} is not in R(G)")
    if not p > profile.C2:
        raise DomainError("needs p > C2")
    T = class_tally(G, p)
    k = dominant_valuation(T, G.VI, G.WI, profile.C2, p)
    if k is not None:
        return DichotomyResult("B", k, k, None, None)
    lq = log_quality(G)
    logM = _logf(profile.M)
    order = []
    note = ""
    try:
        w = edge_sets_witness(G, p)
        order.append((w.k, w.l))
    except LemmaViolation as exc:
        note = f"witness: {exc}"
    blocks = sorted(
        ((induced_log_quality(G, T, a, b), a, b) for (a, b), m in T.E.items() if m),
        key=lambda x: (-x[0], x[1], x[2]),
    )
    order += [(a, b) for _, a, b in blocks if (a, b) not in order]
    best = None
    for a, b in order:
        H = maximalize(induced_subgraph(G, p, a, b))
        ratio = log_quality(H) - lq
        need = logM if a != b else 0.0
        if ratio >= need - _tol(lq):
            return DichotomyResult("A", a, b, H, ratio, note)
        if best is None or ratio > best[0]:
            best = (ratio, a, b, H)
    if best is None:
        return DichotomyResult("none", None, None, None, None, note)
    return DichotomyResult("none", best[1], best[2], best[3], best[0], note or "no block reached its factor")


# small primes ----------------------------------------------------------------------

def _smallest_r(p: int, C4) -> int:
    r = 1
    while p**r <= C4:
        r += 1
    return r


def _best_block(G: GcdGraph, p: int):
    T = class_tally(G, p)
    best = None
    for (a, b), m in sorted(T.E.items()):
        if not m:
            continue
        lq = induced_log_quality(G, T, a, b)
        if best is None or lq > best[0]:
            best = (lq, a, b)
    if best is None:
        return None
    return induced_subgraph(G, p, best[1], best[2])


def small_iteration(G: GcdGraph, p: int, profile, trace: IterationTrace | None = None):
    """Add p to P losing at most a factor C5; returns (graph, rule)."""
    _need_positive_density(G)
    if not _in_R(G, p):
        raise DomainError(f"{p} is not in R(G)")
    lq0 = log_quality(G)
    floor = lq0 - _logf(profile.C5)
    G1 = high_degree_refine(G).graph
    if not _in_R(G1, p):
        # the refinement removed every edge through p; any block adds p to P
        return _best_block(G1, p), "SmallIteration/absent"
    # small quality loss, or a valuation with 9/10 of both sides
    try:
        w = edge_sets_witness(G1, p)
        H = induced_subgraph(G1, p, w.k, w.l)
        if log_quality(H) >= lq0 - _logf(profile.C3) - _tol(lq0):
            return H, "SmallPrime(a)"
    except LemmaViolation:
        pass
    T = class_tally(G1, p)
    k = dominant_valuation(T, G1.VI, G1.WI, Fraction(p, 10), p)  # 1 - (p/10)/p = 9/10
    path_ok = k is not None
    if path_ok and p > 10 * profile.C2:
        md = main_dichotomy(G1, p, profile)
        if md.branch == "A":
            return md.graph, "MainLem(a)"
        path_ok = md.branch == "B" and md.k == k
    if path_ok:
        r = _smallest_r(p, profile.C4)
        ub = unbalanced_edges(G1, p, k, r, profile, "W")
        if ub.branch == "a":
            return induced_subgraph(G1, p, k, ub.index), "UnbalancedSetEdges(a)"
        near = [l for l in T.ls() if abs(l - k) <= r]
        Vk = [v for v, a in T.vval.items() if a == k]
        parts = [[w for w, b in T.wval.items() if b == l] for l in near]
        G2 = subgraph(G1, Vk, [w for part in parts for w in part])
        if G2.EI > 0 and G2.VI > 0 and G2.WI > 0:
            ph = pigeonhole_select(G2, [Vk], parts)
            H = induced_subgraph(G1, p, k, near[ph.j])
            if H.EI > 0 and log_quality(H) >= floor - _tol(lq0):
                return H, "SmallIteration"
    H = _best_block(G1, p)
    if trace is not None:
        trace.finding(f"small iteration at p={p} fell back to the best block", G)
    return H, "SmallIteration(fallback)"


def small_primes_pipeline(G: GcdGraph, profile, trace: IterationTrace | None = None):
    """Absorb every prime p <= C6 of R(G) into P; each step loses at most C5."""
    _need_positive_density(G)
    trace = IterationTrace() if trace is None else trace
    guarantee = -_logf(profile.C5)
    while True:
        R = R_set(G)
        small = sorted(p for p in R if profile.below_C6(p))
        if not small:
            return G, trace
        p = small[0]
        H, rule = small_iteration(G, p, profile, trace)
        R2 = R_set(H)
        ok = p in H.P and R2 <= (R - {p}) and H.EI > 0
        trace.record(rule, G, H, guarantee, ok, note=f"p={p}")
        G = H


# iteration steps ---------------------------------------------------------------------

def _check_large_R(G: GcdGraph, profile):
    R = R_set(G)
    if not R:
        raise DomainError("R(G) is empty")
    if any(profile.below_C6(p) for p in R):
        raise DomainError("R(G) contains primes <= C6")
    return R


def iteration_step1(G: GcdGraph, profile, trace: IterationTrace | None = None) -> GcdGraph:
    """Absorb one flat prime with quality gain M^N, N = 1_{f'(p) != g'(p)}."""
    _need_positive_density(G)
    trace = IterationTrace() if trace is None else trace
    _check_large_R(G, profile)
    rs = r_split(G, profile)
    if not rs.R_flat:
        raise DomainError("R_flat(G) is empty")
    p = min(rs.R_flat)
    lq = log_quality(G)
    logM = _logf(profile.M)
    H = None
    if p in rs.dominant:
        best = best_offdiagonal(G, class_tally(G, p))
        if best is not None and best[0] - lq >= logM - _tol(lq):
            H = maximalize(induced_subgraph(G, p, best[1], best[2]))
            rule = "IterationStep1/dominant"
    else:
        md = main_dichotomy(G, p, profile)
        if md.graph is not None:
            H = md.graph
            rule = "IterationStep1/MainLem" if md.branch == "A" else "IterationStep1/best"
    if H is None:
        H = maximalize(_best_block(G, p))
        rule = "IterationStep1/best"
    N = 1 if H.f[p] != H.g[p] else 0
    exact_vals = all(valuation(v, p) == H.f[p] for v in H.V) and all(valuation(w, p) == H.g[p] for w in H.W)
    R2 = R_set(H)
    ok = H.P == G.P | {p} and R2 < rs.R and exact_vals and H.EI > 0
    trace.record(rule, G, H, N * logM, ok, note=f"p={p}")
    return H


def _plus_graph(G: GcdGraph, p: int, k: int, T) -> GcdGraph:
    """Vertices with valuation k or k+1, edges with one end at exactly k, f(p) = g(p) = k."""
    near = {k - 1, k, k + 1}
    Vp = {v for v, a in T.vval.items() if a in (k, k + 1)}
    Wp = {w for w, b in T.wval.items() if b in (k, k + 1)}
    E = [
        (v, w) for v, w in G.E
        if v in Vp and w in Wp
        and ((T.vval[v] == k and T.wval[w] in near) or (T.wval[w] == k and T.vval[v] in near))
    ]
    f, g = dict(G.f), dict(G.g)
    f[p] = g[p] = k
    return GcdGraph(G.mu, Vp, Wp, E, G.P | {p}, f, g, G.tau)


def iteration_step2(G: GcdGraph, profile, trace: IterationTrace | None = None) -> GcdGraph:
    """Absorb one sharp prime without losing quality."""
    _need_positive_density(G)
    trace = IterationTrace() if trace is None else trace
    _check_large_R(G, profile)
    rs = r_split(G, profile)
    if rs.R_flat:
        raise DomainError("R_flat(G) is not empty")
    if not rs.R_sharp:
        raise DomainError("R_sharp(G) is empty")
    p = min(rs.R_sharp)
    lq = log_quality(G)
    ns = no_small_set_edges(G, profile.C2 / p)
    if not ns.certified:
        trace.finding(f"small-set condition at p={p} could not be certified")
    G0 = ns.graph
    rule = None
    H = None
    if _in_R(G0, p):
        md = main_dichotomy(G0, p, profile)
        if md.branch == "A":
            H, rule = md.graph, "IterationStep2/MainLem"
        elif md.branch == "B":
            k = md.k
            T = class_tally(G0, p)
            cands = [("plus", _plus_graph(G0, p, k, T))]
            if k >= 1:
                cands += [("down", induced_subgraph(G0, p, k, k - 1)), ("up", induced_subgraph(G0, p, k - 1, k))]
            for (a, b), m in sorted(T.E.items()):
                if m:
                    cands.append((f"block{a},{b}", induced_subgraph(G0, p, a, b)))
            scored = [(log_quality(c), -i, name, c) for i, (name, c) in enumerate(cands) if c.EI > 0]
            if scored:
                lqH, _, name, H = max(scored, key=lambda s: (s[0], s[1]))
                rule = f"IterationStep2/{name}"
    if H is None:
        # the small-set pass removed every edge through p: absorb p at its only valuation pair
        H = _best_block(G0, p) if _in_R(G0, p) else _absorb_absent(G0, p)
        rule = "IterationStep2/best"
    R2 = R_set(H)
    ok = H.P == G.P | {p} and R2 < rs.R and H.EI > 0
    trace.record(rule, G, H, 0.0, ok, note=f"p={p}")
    return H


def _absorb_absent(G: GcdGraph, p: int) -> GcdGraph:
    """p divides no edge gcd: restrict to the heaviest valuation block."""
    T = class_tally(G, p)
    best = max(((induced_log_quality(G, T, a, b), -a, -b) for (a, b), m in T.E.items() if m))
    return induced_subgraph(G, p, -best[1], -best[2])


# cosmetic pruning ----------------------------------------------------------------------

@dataclass
class PruneResult:
    graph: GcdGraph
    removed_mass_ratio: Fraction
    quality_ok: bool      # q' >= q/2
    edges_ok: bool        # every surviving edge meets the restricted bound
    edge_mass_reports: list


def _prune_pre(G: GcdGraph, profile, check_maximal: bool):
    _need_positive_density(G)
    rs = r_split(G, profile)
    if rs.R_flat:
        raise DomainError("needs R_flat(G) empty")
    if check_maximal and not is_operationally_maximal(G):
        raise DomainError("needs an (operationally) maximal graph")
    reports = [edge_mass_dichotomy(G, p, profile) for p in sorted(rs.R) if not profile.below_C6(p)]
    return rs.R, reports


def _finish_prune(G: GcdGraph, keep, edges_ok, reports) -> PruneResult:
    H = subgraph(G, G.V, G.W, E=keep)
    removed = Fraction(G.EI - H.EI, G.EI)
    lq = log_quality(G)
    q_ok = H.EI > 0 and log_quality(H) >= lq - math.log(2) - _tol(lq)
    return PruneResult(H, removed, q_ok, edges_ok, reports)


def cosmetic_prune_L(G: GcdGraph, t, s, profile, check_maximal: bool = True) -> PruneResult:
    """Drop the edges where primes of R(G) above t contribute more than 1/(2s) to L_t."""
    t, s = Fraction(t), Fraction(s)
    if s < 1 or t < profile.C6 * s:
        raise DomainError("needs s >= 1 and t >= C6 s")
    bad = [e for e in sorted(G.E) if sum((Fraction(1, p) for p in split_primes(*e) if p > t), Fraction(0)) < 1 / s]
    if bad:
        raise DomainError(f"edge {bad[0]} has L_t < 1/s")
    R, reports = _prune_pre(G, profile, check_maximal)
    keep, edges_ok = [], True
    for v, w in sorted(G.E):
        big = [p for p in split_primes(v, w) if p > t]
        inside = sum((Fraction(1, p) for p in big if p in R), Fraction(0))
        if inside <= 1 / (2 * s):
            keep.append((v, w))
            outside = sum((Fraction(1, p) for p in big if p not in R), Fraction(0))
            edges_ok &= outside >= 1 / (2 * s)
    return _finish_prune(G, keep, edges_ok, reports)


def cosmetic_prune_omega(G: GcdGraph, t, U, profile, check_maximal: bool = True) -> PruneResult:
    """Drop the edges where primes of R(G) in (C6, t] make up too much of omega_t.

    Requires t >= exp(exp(c)) and U >= 2 c log log t with c = profile.omega_c
    (c = C6 in the paper profile)."""
    t, U = Fraction(t), Fraction(U)
    with mpmath.workdps(30):
        c = profile.omega_c
        c = mpmath.mpf(c.numerator) / c.denominator if isinstance(c, Fraction) else c
        tt = mpmath.mpf(t.numerator) / t.denominator
        if tt < mpmath.exp(mpmath.exp(c)):
            raise DomainError("needs t >= exp(exp(c))")
        loglog = mpmath.log(mpmath.log(tt))
        if mpmath.mpf(U.numerator) / U.denominator < 2 * c * loglog:
            raise DomainError("needs U >= 2 c log log t")
        C6 = profile.C6
        cut = float(mpmath.mpf(C6.numerator) / C6.denominator if isinstance(C6, Fraction) else C6) * 1e-9 * float(loglog)
    bad = [e for e in sorted(G.E) if sum(1 for p in split_primes(*e) if p <= t) < U]
    if bad:
        raise DomainError(f"edge {bad[0]} has omega_t < U")
    R, reports = _prune_pre(G, profile, check_maximal)
    keep, edges_ok = [], True
    for v, w in sorted(G.E):
        mid = [p for p in split_primes(v, w) if p <= t and not profile.below_C6(p)]
        inside = sum(1 for p in mid if p in R)
        if inside <= cut:
            keep.append((v, w))
            edges_ok &= 2 * sum(1 for p in mid if p not in R) >= U
    return _finish_prune(G, keep, edges_ok, reports)


# full reduction ----------------------------------------------------------------------

@dataclass
class ReduceResult:
    graph: GcdGraph
    trace: IterationTrace
    a: int
    b: int
    gcd_ok: bool
    bound_ok: bool
    log_q_initial: float
    log_q_final: float


def reduce_to_empty_R(G: GcdGraph, profile, max_steps: int | None = None, strict: bool = False) -> ReduceResult:
    """Small primes first, then step 1 / step 2 until R(G) is empty, then a high-degree refine."""
    _need_positive_density(G)
    trace = IterationTrace(strict=strict)
    lq0 = log_quality(G)
    R0 = R_set(G)
    if R0:
        cap = 10 * len(R0) if max_steps is None else max_steps
        G, _ = small_primes_pipeline(G, profile, trace)
        outer = 0
        while True:
            R = R_set(G)
            if not R:
                break
            outer += 1
            if outer > cap:
                raise ResourceLimitError(f"iteration cap {cap} exceeded\n{to_text(G)}")
            rs = r_split(G, profile)
            G = iteration_step1(G, profile, trace) if rs.R_flat else iteration_step2(G, profile, trace)
            if not len(R_set(G)) < len(R):
                trace.finding("|R| did not decrease", G)
        ref = high_degree_refine(G)
        trace.record("HighDegree", G, ref.graph, 0.0, note=f"removed={len(ref.removed)}")
        G = ref.graph
    a = math.prod(p ** G.f[p] for p in G.P)
    b = math.prod(p ** G.g[p] for p in G.P)
    d = math.gcd(a, b)
    gcd_ok = all(math.gcd(v, w) == d for v, w in G.E)
    lq1 = log_quality(G)
    bound_ok = lq1 >= lq0 + trace.composite_guarantee() - _tol(lq0)
    if not gcd_ok:
        trace.finding("an edge gcd differs from gcd(a, b)", G)
    if not bound_ok:
        trace.finding("final quality is below the composite bound", G)
    return ReduceResult(G, trace, a, b, gcd_ok, bound_ok, lq0, lq1)
