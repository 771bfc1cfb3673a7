"""Approximation sets, the counting function and its variance.

For an approximating function psi with values in [0, 1/2] the set A_q is
the part of [0, 1] within psi(q)/q of a reduced fraction a/q.  Sets are
held as unions of open intervals with exact rational endpoints; the
boundary convention (open intervals, clipped at 0 and 1) only affects
null sets.

Exact variance uses the identity

    sum_{q, r <= Q} |A_q & A_r| = integral_0^1 N(alpha; Q)^2 d alpha

and integrates N^2 by sweeping all interval endpoints in exact order.
The literal pair sum over ``intersect_measure`` is available as
``method="pairs"`` and serves as the cross-check.

Seeded random families and Monte Carlo sampling draw from SplitMix64
(see ``quantds.rng``).  A random family ``random:density,scale,seed``
consumes two outputs per q in increasing order: q is kept when the first
is below density * 2^64, and then psi(q) = min(1/2, scale * (u >> 54) / 1024)
with u the second output.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .errors import ConfigError, DomainError, ResourceLimitError
from .numthy import euler_phi, is_prime
from .rng import SplitMix64, child_seed

HALF = Fraction(1, 2)
DEFAULT_MAX_PAIRS = 10**8
DEFAULT_MAX_EVENTS = 6 * 10**7
_BLOCK_EVENTS = 4 * 10**6
TWO64 = 1 << 64


def parse_rational(text: str) -> Fraction:
    text = text.strip()
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"not an exact rational: {text!r}") from exc


def fmt_rational(x) -> str:
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


class ApproxFunction:
    """psi on [1, Qmax] with exact rational values in [0, 1/2]."""

    def __init__(self, Qmax: int, values: dict, name: str = "custom"):
        if Qmax < 1:
            raise DomainError("Qmax must be >= 1")
        self.Qmax = int(Qmax)
        self.name = name
        clean = {}
        for q, v in values.items():
            q = int(q)
            v = Fraction(v)
            if not 1 <= q <= self.Qmax:
                raise DomainError(f"psi defined at q={q} outside [1, {self.Qmax}]")
            if not 0 <= v <= HALF:
                raise DomainError(f"psi({q}) = {v} outside [0, 1/2]")
            if v:
                clean[q] = v
        self.values = clean

    def check_domain(self, q: int) -> None:
        if not 1 <= q <= self.Qmax:
            raise DomainError(f"q={q} outside the domain [1, {self.Qmax}] of psi")

    def __call__(self, q: int) -> Fraction:
        self.check_domain(q)
        return self.values.get(q, Fraction(0))

    def support(self, Q: int | None = None) -> list[int]:
        Q = self.Qmax if Q is None else Q
        return sorted(q for q in self.values if q <= Q)

    def restrict(self, Q: int) -> "ApproxFunction":
        self.check_domain(Q)
        return ApproxFunction(Q, {q: v for q, v in self.values.items() if q <= Q}, self.name)

    def to_text(self) -> str:
        return "".join(f"{q} {fmt_rational(v)}\n" for q, v in sorted(self.values.items()))

    def __repr__(self):
        return f"ApproxFunction({self.name!r}, Qmax={self.Qmax}, support={len(self.values)})"


def psi_half(Qmax: int) -> ApproxFunction:
    return ApproxFunction(Qmax, {q: HALF for q in range(1, Qmax + 1)}, "half")


def psi_const(Qmax: int, c) -> ApproxFunction:
    c = Fraction(c)
    return ApproxFunction(Qmax, {q: c for q in range(1, Qmax + 1)}, f"const:{c}")


def psi_prime(Qmax: int) -> ApproxFunction:
    """psi(q) = 1/q on primes, 0 elsewhere."""
    return ApproxFunction(
        Qmax, {q: Fraction(1, q) for q in range(2, Qmax + 1) if is_prime(q)}, "prime"
    )


def psi_random(Qmax: int, density=HALF, scale=1, seed: int = 1) -> ApproxFunction:
    density, scale = Fraction(density), Fraction(scale)
    if not 0 <= density <= 1 or scale < 0:
        raise ConfigError("random family needs density in [0,1] and scale >= 0")
    gen = SplitMix64(seed)
    cut = density * TWO64
    vals = {}
    for q in range(1, Qmax + 1):
        keep = gen.next() < cut
        u = gen.next()
        if keep:
            vals[q] = min(HALF, scale * Fraction(u >> 54, 1024))
    return ApproxFunction(Qmax, vals, f"random:{density},{scale},{seed}")


def psi_from_file(path, Qmax: int | None = None) -> ApproxFunction:
    vals = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}:{lineno}: expected 'q num/den'")
        try:
            q = int(parts[0])
        except ValueError as exc:
            raise ConfigError(f"{path}:{lineno}: bad q {parts[0]!r}") from exc
        if q in vals:
            raise ConfigError(f"{path}:{lineno}: duplicate q={q}")
        vals[q] = parse_rational(parts[1])
    if Qmax is None:
        Qmax = max(vals, default=1)
    try:
        return ApproxFunction(Qmax, vals, f"file:{path}")
    except DomainError as exc:
        raise ConfigError(str(exc)) from exc


def parse_family(spec: str, Qmax: int) -> ApproxFunction:
    """half | prime | const:c | random:density,scale,seed | file:path"""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "half" and not arg:
            return psi_half(Qmax)
        if kind == "prime" and not arg:
            return psi_prime(Qmax)
        if kind == "const":
            return psi_const(Qmax, parse_rational(arg))
        if kind == "random":
            d, s, seed = arg.split(",")
            return psi_random(Qmax, parse_rational(d), parse_rational(s), int(seed))
        if kind == "file":
            return psi_from_file(arg, Qmax)
    except (ValueError, DomainError) as exc:
        raise ConfigError(f"bad psi family {spec!r}: {exc}") from exc
    raise ConfigError(f"unknown psi family {spec!r}")


class RationalIntervalUnion:
    """Disjoint open intervals in [0, 1] with exact endpoints.

    Stored as integer endpoints over one common denominator, which keeps
    the intersection sweep in integer arithmetic.  Overlapping input
    intervals are merged; intervals that merely touch are kept apart.
    """

    __slots__ = ("den", "bounds")

    def __init__(self, den: int, bounds):
        self.den = den
        self.bounds = tuple(bounds)

    @classmethod
    def _from_scaled(cls, den: int, bounds) -> "RationalIntervalUnion":
        g = math.gcd(den, *bounds) if bounds else den
        if g > 1:
            den //= g
            bounds = [b // g for b in bounds]
        if not bounds:
            den = 1
        return cls(den, bounds)

    @classmethod
    def from_intervals(cls, intervals) -> "RationalIntervalUnion":
        ivs = [(Fraction(lo), Fraction(hi)) for lo, hi in intervals]
        for lo, hi in ivs:
            if not 0 <= lo < hi <= 1:
                raise DomainError(f"interval ({lo}, {hi}) not inside [0, 1] or empty")
        ivs.sort()
        merged = []
        for lo, hi in ivs:
            if merged and lo < merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        den = math.lcm(*(x.denominator for iv in merged for x in iv)) if merged else 1
        bounds = [int(x * den) for iv in merged for x in iv]
        return cls._from_scaled(den, bounds)

    @classmethod
    def empty(cls) -> "RationalIntervalUnion":
        return cls(1, ())

    @property
    def intervals(self) -> tuple[tuple[Fraction, Fraction], ...]:
        b = self.bounds
        return tuple(
            (Fraction(b[i], self.den), Fraction(b[i + 1], self.den)) for i in range(0, len(b), 2)
        )

    def __len__(self):
        return len(self.bounds) // 2

    @property
    def measure(self) -> Fraction:
        b = self.bounds
        return Fraction(sum(b[i + 1] - b[i] for i in range(0, len(b), 2)), self.den)

    def contains(self, x) -> bool:
        x = Fraction(x) * self.den
        b = self.bounds
        return any(b[i] < x < b[i + 1] for i in range(0, len(b), 2))

    def __eq__(self, other):
        if not isinstance(other, RationalIntervalUnion):
            return NotImplemented
        return self.den == other.den and self.bounds == other.bounds

    def __hash__(self):
        return hash((self.den, self.bounds))

    def __repr__(self):
        body = ", ".join(f"({lo}, {hi})" for lo, hi in self.intervals)
        return f"RationalIntervalUnion[{body}]"


def _aligned(A: RationalIntervalUnion, B: RationalIntervalUnion):
    L = math.lcm(A.den, B.den)
    fa, fb = L // A.den, L // B.den
    return L, [x * fa for x in A.bounds], [x * fb for x in B.bounds]


def intersect(A: RationalIntervalUnion, B: RationalIntervalUnion) -> RationalIntervalUnion:
    L, a, b = _aligned(A, B)
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo, hi = max(a[i], b[j]), min(a[i + 1], b[j + 1])
        if lo < hi:
            out += [lo, hi]
        if a[i + 1] <= b[j + 1]:
            i += 2
        else:
            j += 2
    return RationalIntervalUnion._from_scaled(L, out)


def intersect_measure(A: RationalIntervalUnion, B: RationalIntervalUnion) -> Fraction:
    L, a, b = _aligned(A, B)
    total = 0
    i = j = 0
    na, nb = len(a), len(b)
    while i < na and j < nb:
        ahi, bhi = a[i + 1], b[j + 1]
        d = (ahi if ahi < bhi else bhi) - (a[i] if a[i] > b[j] else b[j])
        if d > 0:
            total += d
        if ahi <= bhi:
            i += 2
        else:
            j += 2
    return Fraction(total, L)


def build_A(q: int, psi: ApproxFunction) -> RationalIntervalUnion:
    v = psi(q)
    if v == 0:
        return RationalIntervalUnion.empty()
    n, d = v.numerator, v.denominator
    den = q * d
    bounds = []
    for a in range(q + 1):
        if math.gcd(a, q) != 1:
            continue
        bounds.append(max(a * d - n, 0))
        bounds.append(min(a * d + n, den))
    return RationalIntervalUnion._from_scaled(den, bounds)


def count_N(alpha, Q: int, psi: ApproxFunction) -> int:
    """Coprime pairs (a, q), q <= Q, with |alpha - a/q| < psi(q)/q.

    Works from the integer window |alpha q - a| < psi(q) alone; at most
    one integer fits because psi(q) <= 1/2.
    """
    alpha = Fraction(alpha)
    if not 0 <= alpha <= 1:
        raise DomainError("alpha must lie in [0, 1]")
    psi.check_domain(Q)
    an, ad = alpha.numerator, alpha.denominator
    count = 0
    for q in psi.support(Q):
        v = psi.values[q]
        n, d = v.numerator, v.denominator
        a = (2 * an * q + ad) // (2 * ad)
        if abs(an * q * d - a * ad * d) < n * ad and math.gcd(a, q) == 1:
            count += 1
    return count


def psi_mass(Q: int, psi: ApproxFunction) -> Fraction:
    psi.check_domain(Q)
    return 2 * sum((Fraction(euler_phi(q)) * psi.values[q] / q for q in psi.support(Q)), Fraction(0))


def psi_mass_prefix(psi: ApproxFunction) -> list[Fraction]:
    """[Psi(0), Psi(1), ..., Psi(Qmax)]."""
    out = [Fraction(0)]
    acc = Fraction(0)
    for q in range(1, psi.Qmax + 1):
        v = psi.values.get(q)
        if v:
            acc += 2 * euler_phi(q) * v / q
        out.append(acc)
    return out


@dataclass(frozen=True)
class Cutoffs:
    values: tuple[int, ...]
    truncated: bool


def dyadic_cutoffs(psi: ApproxFunction, jmax: int) -> Cutoffs:
    """Q_0 = 0 and Q_j = max{Q >= 0 : Psi(Q) < j} for j = 1..jmax.

    Stops early with ``truncated`` set when Psi(Qmax) < j, since Q_j is
    then not determined by the finite domain.
    """
    prefix = psi_mass_prefix(psi)
    out = [0]
    Q = 0
    for j in range(1, jmax + 1):
        if prefix[-1] < j:
            return Cutoffs(tuple(out), True)
        while prefix[Q + 1] < j:
            Q += 1
        out.append(Q)
    return Cutoffs(tuple(out), False)


@dataclass(frozen=True)
class VarianceReport:
    Q: int
    Psi: Fraction
    variance: object
    pair_sum: object
    mode: str
    stderr: float | None = None
    samples: int | None = None
    seed: int | None = None


def _active(Q, psi):
    return [(q, psi.values[q].numerator, psi.values[q].denominator) for q in psi.support(Q)]


def _event_estimate(active) -> int:
    return sum(2 * (q + 1) for q, _, _ in active)


def _block_square_integral(active, block: int, nblocks: int) -> Fraction:
    """Exact integral of N^2 over [block/nblocks, (block+1)/nblocks].

    With events sorted by position, N_k the count after event k and x_k
    its position, the integral equals sum_k (N_{k-1}^2 - N_k^2) x_k.
    Equal positions may come in any order since their terms telescope.
    """
    K = nblocks
    nums, dens, deltas = [], [], []
    for q, n, d in active:
        den = q * d
        a_lo = max(0, (block * den - n * K) // (d * K))
        a_hi = min(q, -((-((block + 1) * den + n * K)) // (d * K)))
        if a_lo > a_hi:
            continue
        a = np.arange(a_lo, a_hi + 1, dtype=np.int64)
        a = a[np.gcd(a, q) == 1]
        lo = a * d - n
        hi = a * d + n
        keep = (lo * K < (block + 1) * den) & (hi * K > block * den)
        lo, hi = lo[keep], hi[keep]
        if lo.size == 0:
            continue
        lo_clip = lo * K < block * den
        hi_clip = hi * K > (block + 1) * den
        lo_den = np.full(lo.size, den, dtype=np.int64)
        hi_den = np.full(hi.size, den, dtype=np.int64)
        lo = np.where(lo_clip, block, lo)
        lo_den[lo_clip] = K
        hi = np.where(hi_clip, block + 1, hi)
        hi_den[hi_clip] = K
        nums += [lo, hi]
        dens += [lo_den, hi_den]
        deltas += [np.ones(lo.size, dtype=np.int64), -np.ones(hi.size, dtype=np.int64)]
    if not nums:
        return Fraction(0)
    num = np.concatenate(nums)
    den = np.concatenate(dens)
    delta = np.concatenate(deltas)
    pos = num / den
    order = np.argsort(pos, kind="stable")
    order = _resolve_close(order, pos, num, den)
    num, den, delta = num[order], den[order], delta[order]
    N = np.cumsum(delta)
    Nprev = N - delta
    nmax = int(np.abs(N).max())
    c = Nprev * Nprev - N * N
    bound = (2 * nmax + 1) * int(den.max()) * num.size
    if bound >= (1 << 62):
        c = c.astype(object)
        num = num.astype(object)
    vals = c * num
    uniq, inv = np.unique(den, return_inverse=True)
    by = np.argsort(inv, kind="stable")
    starts = np.flatnonzero(np.r_[True, np.diff(inv[by]) != 0])
    sums = np.add.reduceat(vals[by], starts)
    total = Fraction(0)
    for s, dd in zip(sums.tolist(), uniq.tolist()):
        if s:
            total += Fraction(int(s), int(dd))
    return total


def _resolve_close(order, pos, num, den):
    """Fix the float ordering where neighbouring positions are too close to trust."""
    p = pos[order]
    close = np.diff(p) < 1e-12
    if not close.any():
        return order
    i = np.flatnonzero(close)
    a, b = order[i], order[i + 1]
    if int(num.max()) * int(den.max()) < (1 << 62):
        unequal = num[a] * den[b] != num[b] * den[a]
    else:
        unequal = np.array(
            [int(num[x]) * int(den[y]) != int(num[y]) * int(den[x]) for x, y in zip(a, b)], dtype=bool
        )
    if not unequal.any():
        return order
    order = order.copy()
    # clusters are maximal runs of close neighbours; only those holding
    # distinct values need an exact sort
    run_start = np.flatnonzero(np.r_[True, ~close[:-1]] & close) if close.size else []
    bad = set(i[unequal].tolist())
    for s in run_start:
        e = s
        while e < close.size and close[e]:
            e += 1
        if not any(k in bad for k in range(s, e)):
            continue
        idx = order[s : e + 1]
        keyed = sorted(idx.tolist(), key=lambda k: Fraction(int(num[k]), int(den[k])))
        order[s : e + 1] = keyed
    return order


def _pairs_block(args):
    Q, psi, qs = args
    sets = {q: build_A(q, psi) for q in psi.support(Q)}
    total = Fraction(0)
    for q in qs:
        A = sets[q]
        total += A.measure
        for r in psi.support(Q):
            if r > q:
                total += 2 * intersect_measure(A, sets[r])
    return total.numerator, total.denominator


def _sweep_block(args):
    active, b, K = args
    x = _block_square_integral(active, b, K)
    # plain ints: pickling a Fraction goes through str, which caps the digit count
    return x.numerator, x.denominator


def square_integral(Q: int, psi: ApproxFunction, method: str = "sweep", workers: int = 1,
                    max_pairs: int = DEFAULT_MAX_PAIRS, max_events: int = DEFAULT_MAX_EVENTS) -> Fraction:
    """sum_{q, r <= Q} |A_q & A_r| as an exact rational."""
    psi.check_domain(Q)
    active = _active(Q, psi)
    if len(active) ** 2 > max_pairs:
        raise ResourceLimitError(f"{len(active) ** 2} pairs exceed the guard of {max_pairs}")
    if method == "pairs":
        qs = [q for q, _, _ in active]
        chunks = [(Q, psi, qs[i::max(workers, 1)]) for i in range(max(workers, 1))]
        parts = _run(_pairs_block, chunks, workers)
    elif method == "sweep":
        est = _event_estimate(active)
        if est > max_events:
            raise ResourceLimitError(f"about {est} interval endpoints exceed the guard of {max_events}")
        K = max(workers, 1, -(-est // _BLOCK_EVENTS))
        parts = _run(_sweep_block, [(active, b, K) for b in range(K)], workers)
    else:
        raise ConfigError(f"unknown method {method!r}")
    return sum((Fraction(n, d) for n, d in parts), Fraction(0))


def _run(fn, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def variance_exact(Q: int, psi: ApproxFunction, method: str = "sweep", workers: int = 1,
                   max_pairs: int = DEFAULT_MAX_PAIRS, max_events: int = DEFAULT_MAX_EVENTS) -> VarianceReport:
    S = square_integral(Q, psi, method, workers, max_pairs, max_events)
    Psi = psi_mass(Q, psi)
    var = S - Psi * Psi
    if var < 0:
        from .errors import InvariantViolation

        raise InvariantViolation(f"negative variance {var} at Q={Q}")
    return VarianceReport(Q=Q, Psi=Psi, variance=var, pair_sum=S, mode="exact")


def count_N_dyadic(ks: np.ndarray, Q: int, psi: ApproxFunction) -> np.ndarray:
    """N(k / 2^64; Q) for each uint64 k.

    Float evaluation with an exact integer recheck wherever the window
    test is within 1e-9 of its boundary.
    """
    alpha = ks.astype(np.float64) / float(TWO64)
    counts = np.zeros(ks.size, dtype=np.int64)
    for q, n, d in _active(Q, psi):
        x = alpha * q
        a = np.rint(x)
        dist = np.abs(x - a)
        pv = n / d
        hit = (dist < pv) & (np.gcd(a.astype(np.int64), q) == 1)
        shaky = np.flatnonzero(np.abs(dist - pv) < 1e-9)
        for i in shaky.tolist():
            k = int(ks[i])
            ai = (k * q + (1 << 63)) >> 64
            hit[i] = abs(k * q - ai * TWO64) * d < n * TWO64 and math.gcd(ai, q) == 1
        counts += hit
    return counts


def _mc_partition(args):
    Q, psi, seed, index, size = args
    gen = SplitMix64(child_seed(seed, index))
    out = []
    step = 1 << 16
    left = size
    while left > 0:
        ks = gen.block(min(step, left))
        out.append(count_N_dyadic(ks, Q, psi))
        left -= ks.size
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def variance_montecarlo(Q: int, psi: ApproxFunction, samples: int, seed: int,
                        partitions: int = 4, workers: int = 1) -> VarianceReport:
    """Sample variance of N(alpha; Q) at alpha = k / 2^64.

    Partition i draws from SplitMix64(child_seed(seed, i)); the
    partition count is part of the experiment, the worker count is not.
    """
    if samples < 2:
        raise DomainError("need at least two samples")
    psi.check_domain(Q)
    sizes = [samples // partitions + (1 if i < samples % partitions else 0) for i in range(partitions)]
    jobs = [(Q, psi, seed, i, s) for i, s in enumerate(sizes)]
    N = np.concatenate(_run(_mc_partition, jobs, workers))
    n = N.size
    s1 = int(N.sum())
    s2 = int((N * N).sum())
    var = Fraction(n * s2 - s1 * s1, n * (n - 1))
    mean = s1 / n
    dev = N - mean
    m4 = float(np.mean(dev**4))
    v = float(var)
    se = math.sqrt(max(m4 - v * v * (n - 3) / (n - 1), 0.0) / n)
    return VarianceReport(Q=Q, Psi=psi_mass(Q, psi), variance=v, pair_sum=None, mode="montecarlo",
                          stderr=se, samples=samples, seed=seed)
