"""Structural steps on GCD graphs, each returning the object it builds.

Every step checks the inequality it is supposed to guarantee on the graph it
actually returns.  Steps whose guarantee is unconditional raise
``LemmaViolation`` when the check fails; the others report a flag.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from ..errors import DomainError, LemmaViolation
from .graph import (
    GcdGraph,
    class_tally,
    density,
    dominant_valuation,
    induced_log_quality,
    log_quality,
    log_quality_from,
    subgraph,
    to_text,
)

LOG_TOL = 1e-9


def _tol(x: float) -> float:
    return LOG_TOL * max(1.0, abs(x))


def _need_positive_density(G: GcdGraph) -> None:
    if G.EI == 0 or G.VI == 0 or G.WI == 0:
        raise DomainError("the step needs edge density > 0")


def degree_cut(tau: Fraction) -> Fraction:
    return (1 + tau) / (2 + tau)


# high degree -----------------------------------------------------------------

@dataclass
class RefineResult:
    graph: GcdGraph
    removed: list = field(default_factory=list)  # ("V"|"W", vertex), in removal order
    log_q_before: float = 0.0
    log_q_after: float = 0.0


def degree_violations(G: GcdGraph) -> list:
    """Vertices with mu(Gamma(v)) < (1+tau)/(2+tau) delta mu(other side), as (ratio, side, vertex)."""
    ints = G.mu.ints
    nv, nw = G.adjacency
    n, d = G.tau.numerator, G.tau.denominator
    out = []
    # deg(v) >= c delta mu(W)  <=>  degI(v) VI (2d+n) >= (d+n) EI
    rhs = (d + n) * G.EI
    for side, S, adj, tot in (("V", G.V, nv, G.VI), ("W", G.W, nw, G.WI)):
        for x in S:
            deg = sum(ints[y] for y in adj.get(x, ()))
            lhs = deg * tot * (2 * d + n)
            if lhs < rhs:
                out.append((Fraction(lhs, rhs), side, x))
    return sorted(out)


def high_degree_refine(G: GcdGraph) -> RefineResult:
    """Delete low-degree vertices one at a time until every degree clears the bar.

    Each deletion keeps (P, f, g) and cannot lower the quality; the vertex
    deleted is the one furthest below the bar (ties: side V first, then
    the smaller vertex).
    """
    _need_positive_density(G)
    res = RefineResult(G, [], log_quality(G), log_quality(G))
    ints = G.mu.ints
    n, d = G.tau.numerator, G.tau.denominator
    V, W = set(G.V), set(G.W)
    nv = {v: set(ws) for v, ws in G.adjacency[0].items()}
    nw = {w: set(vs) for w, vs in G.adjacency[1].items()}
    degv = {v: sum(ints[w] for w in nv.get(v, ())) for v in V}
    degw = {w: sum(ints[v] for v in nw.get(w, ())) for w in W}
    VI, WI, EI = G.VI, G.WI, G.EI
    current = log_quality(G)
    while True:
        rhs = (d + n) * EI
        worst = None
        for side, S, deg, tot in (("V", V, degv, VI), ("W", W, degw, WI)):
            for x in S:
                lhs = deg[x] * tot * (2 * d + n)
                if lhs < rhs:
                    cand = (Fraction(lhs, rhs), side, x)
                    if worst is None or cand < worst:
                        worst = cand
        if worst is None:
            break
        _, side, x = worst
        if side == "V":
            V.discard(x)
            VI -= ints[x]
            EI -= ints[x] * degv.pop(x)
            for w in nv.pop(x, ()):
                nw[w].discard(x)
                degw[w] -= ints[x]
        else:
            W.discard(x)
            WI -= ints[x]
            EI -= ints[x] * degw.pop(x)
            for v in nw.pop(x, ()):
                nv[v].discard(x)
                degv[v] -= ints[x]
        new = log_quality_from(EI, VI, WI, G.mu.den, G.tau, G.prime_log_sum)
        if new < current - _tol(current):
            raise LemmaViolation(f"deleting {side}-vertex {x} lowered the quality", witness=to_text(G))
        current = new
        res.removed.append((side, x))
    out = subgraph(G, V, W)
    res.graph = out
    res.log_q_after = log_quality(out)
    return res


# maximality probes -----------------------------------------------------------

def _removal_probe(G: GcdGraph, pairs: bool = True):
    """Best strict quality gain from deleting one vertex or two vertices, or None."""
    ints = G.mu.ints
    V, W = sorted(G.V), sorted(G.W)
    iv = {v: i for i, v in enumerate(V)}
    iw = {w: j for j, w in enumerate(W)}
    wv = np.array([float(ints[v]) for v in V])
    ww = np.array([float(ints[w]) for w in W])
    A = np.zeros((len(V), len(W)))
    for v, w in G.E:
        A[iv[v], iw[w]] = 1.0
    dv, dw = A @ ww, A.T @ wv
    EI, VI, WI = float(G.EI), float(G.VI), float(G.WI)
    t = float(G.tau)
    base = (2 + t) * math.log(EI) - (1 + t) * (math.log(VI) + math.log(WI))

    def score(e, a, b):
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (e > 0) & (a > 0) & (b > 0)
            out = np.full(np.broadcast(e, a, b).shape, -np.inf)
            out[ok] = ((2 + t) * np.log(np.broadcast_to(e, out.shape)[ok])
                       - (1 + t) * (np.log(np.broadcast_to(a, out.shape)[ok])
                                    + np.log(np.broadcast_to(b, out.shape)[ok])))
        return out

    cands = []
    sv = score(EI - wv * dv, VI - wv, np.full(len(V), WI))
    sw = score(EI - ww * dw, np.full(len(W), VI), WI - ww)
    for side, s, names in (("V", sv, V), ("W", sw, W)):
        if len(names) > 1:
            i = int(np.argmax(s))
            cands.append((s[i], ((side, names[i]),)))
    if pairs:
        if len(V) > 1 and len(W) > 1:
            e = EI - (wv * dv)[:, None] - (ww * dw)[None, :] + np.outer(wv, ww) * A
            s = score(e, (VI - wv)[:, None], (WI - ww)[None, :])
            i, j = np.unravel_index(int(np.argmax(s)), s.shape)
            cands.append((s[i, j], (("V", V[i]), ("W", W[j]))))
        for side, wts, deg, names, tot, other in (("V", wv, dv, V, VI, WI), ("W", ww, dw, W, WI, VI)):
            if len(names) > 2:
                c = wts * deg
                e = EI - c[:, None] - c[None, :]
                a = tot - wts[:, None] - wts[None, :]
                s = score(e, a, np.full(a.shape, other)) if side == "V" else score(e, np.full(a.shape, other), a)
                s[np.tril_indices(len(names))] = -np.inf
                i, j = np.unravel_index(int(np.argmax(s)), s.shape)
                cands.append((s[i, j], ((side, names[i]), (side, names[j]))))
    if not cands:
        return None
    gain, move = max(cands, key=lambda c: c[0])
    if not gain > base + 1e-10 * max(1.0, abs(base)):
        return None
    return move


def maximalize(G: GcdGraph, pairs: bool = True, max_rounds: int = 10_000) -> GcdGraph:
    """Operational maximality: a fixed point of high_degree_refine and of
    one- and two-vertex deletion probes.  Edges are never dropped on their
    own, since that only lowers the quality."""
    _need_positive_density(G)
    for _ in range(max_rounds):
        G = high_degree_refine(G).graph
        move = _removal_probe(G, pairs)
        if move is None:
            return G
        before = log_quality(G)
        V, W = set(G.V), set(G.W)
        for side, x in move:
            (V if side == "V" else W).discard(x)
        H = subgraph(G, V, W)
        if log_quality(H) <= before:
            return G
        G = H
    raise LemmaViolation("maximalize did not settle", witness=to_text(G))


def is_operationally_maximal(G: GcdGraph, pairs: bool = True) -> bool:
    return not degree_violations(G) and _removal_probe(G, pairs) is None


# pigeonhole ------------------------------------------------------------------

@dataclass(frozen=True)
class PigeonholeResult:
    graph: GcdGraph
    i: int
    j: int
    quality_bound_ok: bool
    density_bound_ok: bool


def pigeonhole_select(G: GcdGraph, V_parts, W_parts) -> PigeonholeResult:
    """Best block E(V_i, W_j) of the two partitions; q' >= q/(IJ)^{2+tau}, delta' >= delta/(IJ)."""
    _need_positive_density(G)
    V_parts = [frozenset(x) for x in V_parts]
    W_parts = [frozenset(x) for x in W_parts]
    for name, parts, S in (("V", V_parts, G.V), ("W", W_parts, G.W)):
        if sum(len(x) for x in parts) != len(S) or frozenset().union(*parts) != S:
            raise DomainError(f"the {name} parts do not partition {name}")
    vi = {v: i for i, part in enumerate(V_parts) for v in part}
    wj = {w: j for j, part in enumerate(W_parts) for w in part}
    ints = G.mu.ints
    VIs = [sum(ints[v] for v in part) for part in V_parts]
    WIs = [sum(ints[w] for w in part) for part in W_parts]
    EIs: dict = {}
    for v, w in G.E:
        key = (vi[v], wj[w])
        EIs[key] = EIs.get(key, 0) + ints[v] * ints[w]
    best = None
    for i in range(len(V_parts)):
        for j in range(len(W_parts)):
            lq = log_quality_from(EIs.get((i, j), 0), VIs[i], WIs[j], G.mu.den, G.tau, G.prime_log_sum)
            if best is None or lq > best[0]:
                best = (lq, i, j)
    _, i, j = best
    H = subgraph(G, V_parts[i], W_parts[j])
    IJ = len(V_parts) * len(W_parts)
    lq, lqH = log_quality(G), log_quality(H)
    q_ok = lqH >= lq - (2 + float(G.tau)) * math.log(IJ) - _tol(lq)
    d_ok = density(H) * IJ >= density(G)
    if not (q_ok and d_ok):
        raise LemmaViolation("pigeonhole bound failed on the best block", witness=to_text(G))
    return PigeonholeResult(H, i, j, q_ok, d_ok)


# edge-set witness --------------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    k: int
    l: int
    branch: str  # "diagonal" or "off-diagonal"
    log_slack: float


def _pow_ge(lhs: Fraction, a, rhs: Fraction, b) -> bool:
    """lhs^a >= rhs^b for positive rationals and nonnegative integer exponents."""
    return lhs**a >= rhs**b


def edge_sets_witness(G: GcdGraph, p: int, C1=None) -> Witness:
    """A pair (k, l) with alpha_k, beta_l > 0 whose edge block is heavy enough.

    alpha_k = mu(V_{p^k})/mu(V), beta_l = mu(W_{p^l})/mu(W) and the block
    share e = mu(E_{p^k,p^l})/mu(E) must satisfy

        e >= (alpha_k beta_k)^{(1+tau)/(2+tau)}                         if k == l
        e >= S_{k,l} / (2^{|k-l|/20} C1)                                if k != l

    with S_{k,l} = alpha_k(1-beta_k) + beta_k(1-alpha_k) + alpha_l(1-beta_l) + beta_l(1-alpha_l).
    C1 defaults to 10^4/tau, the size for which existence is guaranteed.
    Among qualifying pairs the largest log slack wins, ties to the smallest (k, l).
    """
    _need_positive_density(G)
    if p in G.P:
        raise DomainError(f"{p} is already in P")
    tau = G.tau
    C1 = Fraction(10**4) / tau if C1 is None else Fraction(C1)
    T = class_tally(G, p)
    if not any(T.vval[v] > 0 and T.wval[w] > 0 for v, w in G.E):
        raise DomainError(f"{p} does not divide the gcd of any edge")
    alpha = {k: Fraction(m, G.VI) for k, m in T.V.items() if m}
    beta = {l: Fraction(m, G.WI) for l, m in T.W.items() if m}
    n, d = tau.numerator, tau.denominator
    t = float(tau)
    best = None
    for k in sorted(alpha):
        for l in sorted(beta):
            m = T.E.get((k, l), 0)
            if m == 0:
                continue
            e = Fraction(m, G.EI)
            if k == l:
                ab = alpha[k] * beta[k]
                slack = math.log(e) - (1 + t) / (2 + t) * math.log(ab)
                ok = slack > 1e-9 or (slack > -1e-9 and _pow_ge(e, 2 * d + n, ab, d + n))
                branch = "diagonal"
            else:
                S = (alpha[k] * (1 - beta.get(k, 0)) + beta.get(k, 0) * (1 - alpha[k])
                     + alpha.get(l, 0) * (1 - beta[l]) + beta[l] * (1 - alpha.get(l, 0)))
                slack = math.log(e) + abs(k - l) / 20 * math.log(2) + math.log(C1) - math.log(S)
                # e C1 2^{|k-l|/20} >= S  <=>  (e C1)^20 2^{|k-l|} >= S^20
                ok = slack > 1e-9 or (slack > -1e-9 and (e * C1) ** 20 * 2 ** abs(k - l) >= S**20)
                branch = "off-diagonal"
            if ok and (best is None or slack > best.log_slack):
                best = Witness(k, l, branch, slack)
    if best is None:
        raise LemmaViolation(f"no (k, l) qualifies for p={p}", witness=to_text(G))
    return best


# small sets --------------------------------------------------------------------

@dataclass
class SmallSetResult:
    graph: GcdGraph
    certified: bool
    steps: int
    log_q_before: float
    log_q_after: float


def small_set_exponent(tau: Fraction) -> Fraction:
    return (2 + 2 * tau) / (2 + tau)


def _small_set_upper_bound(G: GcdGraph, eta: Fraction) -> float:
    """Fractional-knapsack bound on max mu(E(A, B)) over mu(A) <= eta mu(V), mu(B) <= eta mu(W)."""
    ints = G.mu.ints
    nv, nw = G.adjacency
    bounds = []
    for S, adj, cap_own, cap_other in ((G.V, nv, eta * G.VI, eta * G.WI), (G.W, nw, eta * G.WI, eta * G.VI)):
        items = []
        for x in S:
            wt = ints[x]
            if wt == 0 or wt > cap_own:
                continue
            deg = sum(ints[y] for y in adj.get(x, ()))
            items.append((min(float(deg), float(cap_other)), float(wt)))
        items.sort(reverse=True)
        room, total = float(cap_own), 0.0
        for ratio, wt in items:
            take = min(wt, room)
            total += ratio * take
            room -= take
            if room <= 0:
                break
        bounds.append(total)
    return min(bounds)


def _greedy_block(ints, cands, adj, cap, target):
    """Greedy 0/1 knapsack: pick vertices by mass into ``target`` per unit weight."""
    scored = []
    for x in cands:
        wt = ints[x]
        if wt > cap:
            continue
        gain = sum(ints[y] for y in adj.get(x, ()) if y in target) * ints[x]
        if gain > 0:
            scored.append((Fraction(gain, wt) if wt else Fraction(10**30), x))
    scored.sort(key=lambda s: (-s[0], s[1]))
    out, used = set(), 0
    for _, x in scored:
        if used + ints[x] <= cap:
            out.add(x)
            used += ints[x]
    return out


def _edge_mass(G: GcdGraph, A, B) -> int:
    ints = G.mu.ints
    return sum(ints[v] * ints[w] for v, w in G.E if v in A and w in B)


def find_small_set_violation(G: GcdGraph, eta: Fraction, exhaustive_limit: int = 8):
    """A pair (A, B) of small sets carrying too much edge mass, or None.

    Returns (A, B, certified): certified means no violation exists (by the
    knapsack bound or an exhaustive search)."""
    eta = Fraction(eta)
    expo = small_set_exponent(G.tau)
    limit = float(eta) ** float(expo) * G.EI
    ub = _small_set_upper_bound(G, eta)
    if ub <= limit * (1 - 1e-12):
        return None, None, True
    ints = G.mu.ints
    nv, nw = G.adjacency
    capV, capW = eta * G.VI, eta * G.WI

    def violates(A, B):
        if not A or not B:
            return False
        m = Fraction(_edge_mass(G, A, B), G.EI)
        # m > eta^expo  <=>  m^(den) > eta^(num) with expo = num/den
        return m ** expo.denominator > eta ** expo.numerator

    seeds = sorted(G.V, key=lambda v: (-sum(ints[w] for w in nv.get(v, ())), v))[:8]
    for v in seeds:
        if ints[v] > capV:
            continue
        A = {v}
        for _ in range(4):
            B = _greedy_block(ints, G.W, nw, capW, A)
            A2 = _greedy_block(ints, G.V, nv, capV, B)
            if violates(A2, B):
                return A2, B, False
            if violates(A, B):
                return A, B, False
            if A2 == A:
                break
            A = A2
    if len(G.V) <= exhaustive_limit and len(G.W) <= exhaustive_limit:
        smallV = [v for v in sorted(G.V) if ints[v] <= capV]
        smallW = [w for w in sorted(G.W) if ints[w] <= capW]
        for ra in range(1, len(smallV) + 1):
            for A in itertools.combinations(smallV, ra):
                if sum(ints[x] for x in A) > capV:
                    continue
                for rb in range(1, len(smallW) + 1):
                    for B in itertools.combinations(smallW, rb):
                        if sum(ints[x] for x in B) <= capW and violates(set(A), set(B)):
                            return set(A), set(B), False
        return None, None, True
    return None, None, False


def no_small_set_edges(G: GcdGraph, eta, max_steps: int = 1000) -> SmallSetResult:
    """Pass to (A, B) while some small pair of sets carries too much edge mass.

    If mu(E(A, B)) > eta^{(2+2tau)/(2+tau)} mu(E) with mu(A) <= eta mu(V) and
    mu(B) <= eta mu(W), then the graph induced on (A, B) has higher quality.
    """
    _need_positive_density(G)
    eta = Fraction(eta)
    if not 0 < eta <= 1:
        raise DomainError("eta must lie in (0, 1]")
    before = log_quality(G)
    steps = 0
    if eta == 1:
        return SmallSetResult(G, True, 0, before, before)
    while steps < max_steps:
        A, B, certified = find_small_set_violation(G, eta)
        if A is None:
            return SmallSetResult(G, certified, steps, before, log_quality(G))
        H = subgraph(G, A, B)
        if not log_quality(H) > log_quality(G):
            raise LemmaViolation("a heavy small block did not raise the quality", witness=to_text(G))
        G = H
        steps += 1
    return SmallSetResult(G, False, steps, before, log_quality(G))


# unbalanced blocks ---------------------------------------------------------------

@dataclass(frozen=True)
class UnbalancedResult:
    branch: str  # "a": a block with quality gain > M; "b": far blocks carry little mass
    index: int | None
    far_mass_ratio: Fraction
    far_mass_bound: float
    holds: bool


def unbalanced_edges(G: GcdGraph, p: int, k: int, r: int, profile, side: str = "W") -> UnbalancedResult:
    """Blocks E_{p^k,p^l} with |l - k| >= r + 1 (side W) or E_{p^j,p^k} (side V).

    Needs p^r > C4 and the fixed side to have density >= 1 - C2/p at
    valuation k.  Either a far block raises the quality by more than M, or the
    far blocks together carry at most mu(E)/(4 p^{1+tau/4}).
    """
    _need_positive_density(G)
    if p**r <= profile.C4:
        raise DomainError("needs p^r > C4")
    T = class_tally(G, p)
    fixed, tot = (T.V, G.VI) if side == "W" else (T.W, G.WI)
    if Fraction(fixed.get(k, 0), tot) < 1 - profile.C2 / p:
        raise DomainError("the fixed side is not concentrated at valuation k")
    lq = log_quality(G)
    logM = math.log(float(profile.M))
    others = T.ls() if side == "W" else T.ks()
    far = [j for j in others if abs(j - k) >= r + 1]
    mass = 0
    best = None
    for j in far:
        a, b = (k, j) if side == "W" else (j, k)
        mass += T.E.get((a, b), 0)
        lqj = induced_log_quality(G, T, a, b)
        if lqj - lq > logM and (best is None or lqj > best[0]):
            best = (lqj, j)
    ratio = Fraction(mass, G.EI)
    bound = 1 / (4 * p ** (1 + float(G.tau) / 4))
    if best is not None:
        return UnbalancedResult("a", best[1], ratio, bound, True)
    return UnbalancedResult("b", None, ratio, bound, float(ratio) <= bound * (1 + 1e-12))


# edge mass off the dominant valuation --------------------------------------------

@dataclass(frozen=True)
class EdgeMassReport:
    p: int
    k: int
    mass_ratio: Fraction        # mu(E((V x W') u (V' x W)))/mu(E)
    split_mass_ratio: Fraction  # edges with p | vw/gcd(v,w)^2
    bound: float                # C6/(10^10 p)
    mass_ok: bool
    gain_ok: bool               # q(G(V', W')) > q(G)

    @property
    def holds(self) -> bool:
        return self.mass_ok or self.gain_ok


def edge_mass_dichotomy(G: GcdGraph, p: int, profile) -> EdgeMassReport:
    """For p in R(G) with a dominant valuation k: either few edges touch V' = V \\ V_{p^k}
    or W' = W \\ W_{p^k}, or the graph on (V', W') has higher quality."""
    _need_positive_density(G)
    T = class_tally(G, p)
    k = dominant_valuation(T, G.VI, G.WI, profile.C2, p)
    if k is None:
        raise DomainError(f"no valuation of {p} dominates both sides")
    ints = G.mu.ints
    Vp = {v for v, a in T.vval.items() if a != k}
    Wp = {w for w, b in T.wval.items() if b != k}
    off = split = 0
    for v, w in G.E:
        m = ints[v] * ints[w]
        if v in Vp or w in Wp:
            off += m
        if T.vval[v] != T.wval[w]:
            split += m
    bound = float(profile.C6) / (1e10 * p)
    mass_ratio = Fraction(off, G.EI)
    H = subgraph(G, Vp, Wp)
    gain = log_quality(H) > log_quality(G)
    return EdgeMassReport(p, k, mass_ratio, Fraction(split, G.EI), bound,
                          float(mass_ratio) <= bound, gain)
