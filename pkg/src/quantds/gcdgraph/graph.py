"""Weighted bipartite graphs whose edges carry prescribed p-adic gcd data.

A graph is the septuple (mu, V, W, E, P, f, g) plus the exponent tau used by
its quality.  Vertex weights are exact rationals; internally every weight is
an integer over one common denominator so that the sums mu(V), mu(W), mu(E)
are integer sums.

Quality, in log form:

    log q = (2+tau) log delta + log mu(V) + log mu(W)
            + sum_{p in P} [ |f-g| log p - 2 log(1 - 1_{f=g>=1}/p)
                             - 3 log(1 - p^(-1-tau/4)) ]

An exact form is available when every integer involved can be factored:
a product of primes to rational powers times symbolic (1 - p^(-1-tau/4))
factors.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

from ..errors import DomainError, GraphValidationError
from ..numthy import FACTOR_BOUND, factorize, is_prime, valuation

DEFAULT_TAU = Fraction(1, 128)
EXACT_MAX_PRIMES = 16


class Measure:
    """Vertex weights mu(n) as exact rationals over one common denominator."""

    def __init__(self, weights: dict):
        vals = {}
        for n, x in weights.items():
            n, x = int(n), Fraction(x)
            vals[n] = x
        self.values = vals
        self.den = math.lcm(1, *(x.denominator for x in vals.values()))
        self.ints = {n: x.numerator * (self.den // x.denominator) for n, x in vals.items()}

    def __call__(self, n: int) -> Fraction:
        return self.values[n]

    def __contains__(self, n):
        return n in self.values

    def itotal(self, S) -> int:
        ints = self.ints
        return sum(ints[n] for n in S)

    def total(self, S) -> Fraction:
        return Fraction(self.itotal(S), self.den)


class GcdGraph:
    """Immutable snapshot of a GCD graph.  Build validated instances with ``new_graph``."""

    def __init__(self, mu: Measure, V, W, E, P=(), f=None, g=None, tau=DEFAULT_TAU):
        self.mu = mu
        self.V = frozenset(V)
        self.W = frozenset(W)
        self.E = frozenset(E)
        self.P = frozenset(P)
        self.f = dict(f or {})
        self.g = dict(g or {})
        self.tau = Fraction(tau)

    # integer totals over mu.den
    @cached_property
    def VI(self) -> int:
        return self.mu.itotal(self.V)

    @cached_property
    def WI(self) -> int:
        return self.mu.itotal(self.W)

    @cached_property
    def EI(self) -> int:
        ints = self.mu.ints
        return sum(ints[v] * ints[w] for v, w in self.E)

    @cached_property
    def adjacency(self):
        nv, nw = defaultdict(set), defaultdict(set)
        for v, w in self.E:
            nv[v].add(w)
            nw[w].add(v)
        return nv, nw

    @cached_property
    def prime_log_sum(self) -> float:
        return sum(prime_term(p, self.f[p], self.g[p], self.tau) for p in self.P)

    def mu_V(self) -> Fraction:
        return Fraction(self.VI, self.mu.den)

    def mu_W(self) -> Fraction:
        return Fraction(self.WI, self.mu.den)

    def mu_E(self) -> Fraction:
        return Fraction(self.EI, self.mu.den**2)

    def is_trivial(self) -> bool:
        return self.EI == 0

    def key(self):
        return (
            tuple(sorted(self.V)),
            tuple(sorted(self.W)),
            tuple(sorted(self.E)),
            tuple(sorted((p, self.f[p], self.g[p]) for p in self.P)),
        )

    def __eq__(self, other):
        return isinstance(other, GcdGraph) and self.key() == other.key() and self.tau == other.tau

    def __hash__(self):
        return hash(self.key())

    def __repr__(self):
        return (
            f"GcdGraph(|V|={len(self.V)}, |W|={len(self.W)}, |E|={len(self.E)}, "
            f"P={sorted(self.P)}, tau={self.tau})"
        )


def _as_measure(mu, vertices) -> Measure:
    if isinstance(mu, Measure):
        return mu
    if isinstance(mu, dict):
        return Measure(mu)
    if callable(mu):
        return Measure({n: mu(n) for n in vertices})
    return Measure({n: Fraction(mu) for n in vertices})


def violations(G: GcdGraph) -> list[str]:
    out = []
    if not 0 < G.tau < Fraction(1, 100):
        out.append(f"tau={G.tau} is outside (0, 1/100)")
    for side, S in (("V", G.V), ("W", G.W)):
        for n in sorted(S):
            if not isinstance(n, int) or n < 1:
                out.append(f"{side} contains non-positive or non-integer vertex {n!r}")
            elif n not in G.mu:
                out.append(f"vertex {n} of {side} has no weight")
            elif G.mu(n) < 0:
                out.append(f"vertex {n} has negative weight {G.mu(n)}")
    for v, w in sorted(G.E):
        if v not in G.V or w not in G.W:
            out.append(f"edge ({v},{w}) is not in V x W")
    for p in sorted(G.P):
        if not is_prime(p):
            out.append(f"{p} in P is not prime")
            continue
        if p not in G.f or p not in G.g:
            out.append(f"f or g undefined at {p}")
            continue
        fp, gp = G.f[p], G.g[p]
        if not (isinstance(fp, int) and isinstance(gp, int) and fp >= 0 and gp >= 0):
            out.append(f"f({p}), g({p}) must be nonnegative integers")
            continue
        for v in sorted(G.V):
            if isinstance(v, int) and v >= 1 and v % p**fp:
                out.append(f"(5a) {p}^{fp} does not divide v={v}")
        for w in sorted(G.W):
            if isinstance(w, int) and w >= 1 and w % p**gp:
                out.append(f"(5a) {p}^{gp} does not divide w={w}")
        m = min(fp, gp)
        for v, w in sorted(G.E):
            if valuation(math.gcd(v, w), p) != m:
                out.append(f"(5b) {p}^{m} does not exactly divide gcd({v},{w})")
    extra = (set(G.f) | set(G.g)) - G.P
    if extra:
        out.append(f"f or g defined off P at {sorted(extra)}")
    return out


def new_graph(mu, V, W, E, P=(), f=None, g=None, tau=DEFAULT_TAU) -> GcdGraph:
    V, W = frozenset(V), frozenset(W)
    G = GcdGraph(_as_measure(mu, V | W), V, W, E, P, f, g, tau)
    bad = violations(G)
    if bad:
        raise GraphValidationError(bad)
    return G


def subgraph(G: GcdGraph, V, W, E=None, P=None, f=None, g=None) -> GcdGraph:
    """Subgraph on V' x W' sharing mu and tau; edges default to E(V', W')."""
    V, W = frozenset(V), frozenset(W)
    if E is None:
        E = [e for e in G.E if e[0] in V and e[1] in W]
    return GcdGraph(
        G.mu, V, W, E,
        G.P if P is None else P,
        G.f if f is None else f,
        G.g if g is None else g,
        G.tau,
    )


def density(G: GcdGraph) -> Fraction:
    d = G.VI * G.WI
    return Fraction(G.EI, d) if d else Fraction(0)


def prime_term(p: int, fp: int, gp: int, tau: Fraction) -> float:
    """log of p^{|f-g|} (1 - 1_{f=g>=1}/p)^{-2} (1 - p^{-1-tau/4})^{-3}."""
    out = abs(fp - gp) * math.log(p)
    if fp == gp >= 1:
        out -= 2 * math.log1p(-1 / p)
    out -= 3 * math.log1p(-(p ** (-1 - float(tau) / 4)))
    return out


def _ilog(n: int) -> float:
    return math.log(n)


def log_quality_from(EI: int, VI: int, WI: int, den: int, tau: Fraction, prime_sum: float) -> float:
    if EI == 0 or VI == 0 or WI == 0:
        return -math.inf
    t = float(tau)
    return (2 + t) * _ilog(EI) - (1 + t) * (_ilog(VI) + _ilog(WI)) - 2 * _ilog(den) + prime_sum


def log_quality(G: GcdGraph) -> float:
    return log_quality_from(G.EI, G.VI, G.WI, G.mu.den, G.tau, G.prime_log_sum)


class ExactQuality:
    """q as prod of primes to rational powers times prod of (1 - p^(-1-tau/4))^e.

    ``powers`` maps a prime p to its exponent, and ('sieve', p) to the
    exponent of (1 - p^(-1-tau/4)).  A zero quality has ``zero=True``.
    """

    __slots__ = ("zero", "powers", "tau")

    def __init__(self, powers=None, zero=False, tau=DEFAULT_TAU):
        self.zero = zero
        self.tau = Fraction(tau)
        self.powers = {} if zero else {k: Fraction(e) for k, e in (powers or {}).items() if e != 0}

    @classmethod
    def of_int(cls, n: int, exponent, tau) -> "ExactQuality":
        if n == 0:
            return cls(zero=True, tau=tau)
        return cls({p: e * Fraction(exponent) for p, e in factorize(n).factors}, tau=tau)

    @classmethod
    def sieve(cls, p: int, exponent, tau) -> "ExactQuality":
        return cls({("sieve", p): exponent}, tau=tau)

    def __mul__(self, other):
        if self.zero or other.zero:
            return ExactQuality(zero=True, tau=self.tau)
        out = dict(self.powers)
        for k, e in other.powers.items():
            out[k] = out.get(k, 0) + e
        return ExactQuality(out, tau=self.tau)

    def __truediv__(self, other):
        if other.zero:
            raise ZeroDivisionError("division by a zero quality")
        return self * ExactQuality({k: -e for k, e in other.powers.items()}, zero=self.zero, tau=self.tau)

    def __eq__(self, other):
        return isinstance(other, ExactQuality) and self.zero == other.zero and self.powers == other.powers

    def __hash__(self):
        return hash((self.zero, tuple(sorted(self.powers.items(), key=repr))))

    def log(self) -> float:
        if self.zero:
            return -math.inf
        out = 0.0
        t = float(self.tau)
        for k, e in self.powers.items():
            if isinstance(k, tuple):
                out += float(e) * math.log1p(-(k[1] ** (-1 - t / 4)))
            else:
                out += float(e) * math.log(k)
        return out

    def __repr__(self):
        if self.zero:
            return "ExactQuality(0)"
        parts = []
        for k in sorted(self.powers, key=lambda x: (isinstance(x, tuple), x if isinstance(x, int) else x[1])):
            e = self.powers[k]
            base = f"(1-{k[1]}^(-1-tau/4))" if isinstance(k, tuple) else str(k)
            parts.append(f"{base}^({e})")
        return "ExactQuality(" + " * ".join(parts) + ")"


def _factorable(*ns) -> bool:
    return all(0 <= n < FACTOR_BOUND for n in ns)


def _prime_factor_exact(p: int, fp: int, gp: int, tau) -> ExactQuality:
    out = ExactQuality({p: abs(fp - gp)}, tau=tau)
    if fp == gp >= 1:
        # (1 - 1/p)^{-2} = p^2 (p-1)^{-2}
        out = out * ExactQuality({p: 2}, tau=tau) * ExactQuality.of_int(p - 1, -2, tau)
    return out * ExactQuality.sieve(p, -3, tau)


def exact_quality(G: GcdGraph) -> ExactQuality | None:
    """Exact form of q(G), or None when |P| > 16 or a needed factorisation is out of reach."""
    if len(G.P) > EXACT_MAX_PRIMES:
        return None
    tau = G.tau
    if G.EI == 0 or G.VI == 0 or G.WI == 0:
        return ExactQuality(zero=True, tau=tau)
    if not _factorable(G.EI, G.VI, G.WI, G.mu.den):
        return None
    q = (
        ExactQuality.of_int(G.EI, 2 + tau, tau)
        * ExactQuality.of_int(G.VI, -(1 + tau), tau)
        * ExactQuality.of_int(G.WI, -(1 + tau), tau)
        * ExactQuality.of_int(G.mu.den, -2, tau)
    )
    for p in sorted(G.P):
        q = q * _prime_factor_exact(p, G.f[p], G.g[p], tau)
    return q


@dataclass(frozen=True)
class QualityReport:
    density: Fraction
    log_quality: float
    exact_quality: ExactQuality | None


def quality(G: GcdGraph, profile=None) -> QualityReport:
    return QualityReport(density(G), log_quality(G), exact_quality(G))


def _check_new_prime(G: GcdGraph, p: int) -> None:
    if p in G.P:
        raise DomainError(f"{p} is already in P")
    if not is_prime(p):
        raise DomainError(f"{p} is not prime")


def induced_subgraph(G: GcdGraph, p: int, k: int, l: int) -> GcdGraph:
    """G_{p^k,p^l}: vertices with p^k || v and p^l || w, edges between them, p added to P."""
    _check_new_prime(G, p)
    if k < 0 or l < 0:
        raise DomainError("valuations must be nonnegative")
    V = [v for v in G.V if valuation(v, p) == k]
    W = [w for w in G.W if valuation(w, p) == l]
    Vs, Ws = set(V), set(W)
    E = [(v, w) for v, w in G.E if v in Vs and w in Ws]
    m = min(k, l)
    # p^k || v and p^l || w force p^min(k,l) || gcd(v, w), so no edge is lost to (5b)
    assert all(valuation(math.gcd(v, w), p) == m for v, w in E)
    f = dict(G.f)
    g = dict(G.g)
    f[p], g[p] = k, l
    return GcdGraph(G.mu, V, W, E, G.P | {p}, f, g, G.tau)


@dataclass(frozen=True)
class ClassTally:
    """Integer weight of each valuation class of p on both sides and of each edge block."""

    p: int
    vval: dict
    wval: dict
    V: dict
    W: dict
    E: dict

    def ks(self):
        return sorted(self.V)

    def ls(self):
        return sorted(self.W)


def class_tally(G: GcdGraph, p: int) -> ClassTally:
    ints = G.mu.ints
    vval = {v: valuation(v, p) for v in G.V}
    wval = {w: valuation(w, p) for w in G.W}
    Vt, Wt, Et = defaultdict(int), defaultdict(int), defaultdict(int)
    for v, k in vval.items():
        Vt[k] += ints[v]
    for w, l in wval.items():
        Wt[l] += ints[w]
    for v, w in G.E:
        Et[(vval[v], wval[w])] += ints[v] * ints[w]
    return ClassTally(p, vval, wval, dict(Vt), dict(Wt), dict(Et))


def induced_log_quality(G: GcdGraph, tally: ClassTally, a: int, b: int) -> float:
    """log q(G_{p^a,p^b}) from the class tally, without building the graph."""
    return log_quality_from(
        tally.E.get((a, b), 0), tally.V.get(a, 0), tally.W.get(b, 0),
        G.mu.den, G.tau, G.prime_log_sum + prime_term(tally.p, a, b, G.tau),
    )


@dataclass(frozen=True)
class RatioCheck:
    log_direct: float
    log_formula: float
    error: float
    exact_direct: ExactQuality | None
    exact_formula: ExactQuality | None
    exact_equal: bool | None
    passed: bool


def quality_ratio_identity_check(G: GcdGraph, p: int, k: int, l: int, tol: float = 1e-9) -> RatioCheck:
    """Compare q(G_{p^k,p^l})/q(G) computed two ways.

    Direct: build the induced graph and take its quality.  Formula: the
    product of the edge, vertex and prime-factor ratios, with the class
    weights counted straight from G.
    """
    _check_new_prime(G, p)
    if G.EI == 0:
        raise DomainError("the ratio needs a non-trivial graph")
    ints = G.mu.ints
    Vk = [v for v in G.V if valuation(v, p) == k]
    Wl = [w for w in G.W if valuation(w, p) == l]
    VkI = sum(ints[v] for v in Vk)
    WlI = sum(ints[w] for w in Wl)
    if VkI == 0 or WlI == 0:
        raise DomainError("the ratio needs mu(V_{p^k}) > 0 and mu(W_{p^l}) > 0")
    Vks, Wls = set(Vk), set(Wl)
    EklI = sum(ints[v] * ints[w] for v, w in G.E if v in Vks and w in Wls)

    H = induced_subgraph(G, p, k, l)
    lq_G = log_quality(G)
    log_direct = log_quality(H) - lq_G
    tau, t = G.tau, float(G.tau)
    if EklI == 0:
        log_formula = -math.inf
    else:
        log_formula = (
            (2 + t) * (_ilog(EklI) - _ilog(G.EI))
            + (1 + t) * (_ilog(G.VI) - _ilog(VkI))
            + (1 + t) * (_ilog(G.WI) - _ilog(WlI))
            + prime_term(p, k, l, tau)
        )
    if math.isinf(log_direct) or math.isinf(log_formula):
        error = 0.0 if log_direct == log_formula else math.inf
    else:
        error = abs(log_direct - log_formula)
    ok = error <= tol * max(1.0, abs(lq_G))

    ex_direct = ex_formula = None
    exact_equal = None
    qG, qH = exact_quality(G), exact_quality(H)
    if qG is not None and qH is not None and _factorable(EklI, VkI, WlI):
        ex_direct = qH / qG
        if EklI == 0:
            ex_formula = ExactQuality(zero=True, tau=tau)
        else:
            ex_formula = (
                ExactQuality.of_int(EklI, 2 + tau, tau) * ExactQuality.of_int(G.EI, -(2 + tau), tau)
                * ExactQuality.of_int(G.VI, 1 + tau, tau) * ExactQuality.of_int(VkI, -(1 + tau), tau)
                * ExactQuality.of_int(G.WI, 1 + tau, tau) * ExactQuality.of_int(WlI, -(1 + tau), tau)
                * _prime_factor_exact(p, k, l, tau)
            )
        exact_equal = ex_direct == ex_formula
        ok = ok and exact_equal
    return RatioCheck(log_direct, log_formula, error, ex_direct, ex_formula, exact_equal, ok)


def edge_gcd_primes(G: GcdGraph) -> dict:
    """Primes outside P dividing gcd(v, w), mapped to the edges where they occur."""
    out = defaultdict(list)
    for v, w in sorted(G.E):
        d = math.gcd(v, w)
        if d > 1:
            for p in factorize(d).primes:
                if p not in G.P:
                    out[p].append((v, w))
    return dict(out)


def R_set(G: GcdGraph) -> frozenset:
    return frozenset(edge_gcd_primes(G))


@dataclass(frozen=True)
class RSplit:
    R: frozenset
    R_sharp: frozenset
    R_flat: frozenset
    dominant: dict  # p -> smallest k with both class densities >= 1 - C2/p (when one exists)


def dominant_valuation(tally: ClassTally, VI: int, WI: int, C2: Fraction, p: int):
    """Smallest k with mu(V_{p^k})/mu(V) and mu(W_{p^k})/mu(W) both >= 1 - C2/p, else None."""
    cut = 1 - Fraction(C2) / p
    for k in sorted(set(tally.V) | set(tally.W) | {0}):
        if Fraction(tally.V.get(k, 0), VI) >= cut and Fraction(tally.W.get(k, 0), WI) >= cut:
            return k
    return None


def best_offdiagonal(G: GcdGraph, tally: ClassTally):
    """argmax over a != b of log q(G_{p^a,p^b}), ties to the smallest (a, b); None if all trivial.

    Valuations beyond the largest one present give empty graphs of quality 0,
    so the scan over occurring classes is exhaustive.
    """
    best = None
    for a in tally.ks():
        for b in tally.ls():
            if a == b:
                continue
            lq = induced_log_quality(G, tally, a, b)
            if lq == -math.inf:
                continue
            if best is None or lq > best[0]:
                best = (lq, a, b)
    return best


def r_split(G: GcdGraph, profile) -> RSplit:
    R = R_set(G)
    sharp, dominant = set(), {}
    lq = log_quality(G)
    logM = math.log(float(profile.M))
    for p in sorted(R):
        tally = class_tally(G, p)
        k = dominant_valuation(tally, G.VI, G.WI, profile.C2, p) if G.VI and G.WI else None
        if k is None:
            continue
        dominant[p] = k
        best = best_offdiagonal(G, tally)
        if best is None or best[0] - lq < logM:
            sharp.add(p)
    return RSplit(frozenset(R), frozenset(sharp), frozenset(R - sharp), dominant)


# serialisation ----------------------------------------------------------------

def _fr(x: Fraction) -> str:
    return f"{x.numerator}/{x.denominator}"


def to_text(G: GcdGraph) -> str:
    lines = ["[tau]", _fr(G.tau), "[mu]"]
    for n in sorted(G.V | G.W):
        lines.append(f"{n} {_fr(G.mu(n))}")
    lines += ["[V]", " ".join(map(str, sorted(G.V))), "[W]", " ".join(map(str, sorted(G.W))), "[E]"]
    lines += [f"{v} {w}" for v, w in sorted(G.E)]
    lines.append("[P f g]")
    lines += [f"{p} {G.f[p]} {G.g[p]}" for p in sorted(G.P)]
    return "\n".join(lines) + "\n"


def from_text(text: str) -> GcdGraph:
    from ..approx import parse_rational
    from ..errors import ConfigError

    sections: dict[str, list[str]] = {}
    current = None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current in sections:
                raise ConfigError(f"duplicate section [{current}]")
            sections[current] = []
        elif current is None:
            raise ConfigError(f"content before the first section: {line!r}")
        else:
            sections[current].append(line)
    for name in ("mu", "V", "W", "E"):
        if name not in sections:
            raise ConfigError(f"missing section [{name}]")
    try:
        tau = parse_rational(sections["tau"][0]) if sections.get("tau") else DEFAULT_TAU
        mu = {}
        for line in sections["mu"]:
            n, x = line.split()
            mu[int(n)] = parse_rational(x)
        V = [int(x) for line in sections["V"] for x in line.split()]
        W = [int(x) for line in sections["W"] for x in line.split()]
        E = []
        for line in sections["E"]:
            v, w = line.split()
            E.append((int(v), int(w)))
        P, f, g = [], {}, {}
        for line in sections.get("P f g", []):
            p, a, b = (int(x) for x in line.split())
            P.append(p)
            f[p], g[p] = a, b
    except ValueError as exc:
        raise ConfigError(f"malformed graph file: {exc}") from exc
    return new_graph(mu, V, W, E, P, f, g, tau)
