"""Integer and multiplicative arithmetic.

Everything here is exact: factorisations, totients, Moebius values,
p-adic valuations, smooth parts, and the pair statistics built from
two moduli (q, r) and an approximating function.

Factorisation uses trial division by sieved primes, then a
deterministic Miller-Rabin test and Pollard-Brent splitting for any
cofactor that survives the trial stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

TRIAL_LIMIT = 1 << 16
FACTOR_BOUND = 1 << 64

# Deterministic witnesses for n < 3.3e24.
_MR_BASES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41)


def prime_sieve(limit: int) -> np.ndarray:
    """All primes <= limit as an int64 array."""
    if limit < 2:
        return np.zeros(0, dtype=np.int64)
    is_p = np.ones(limit + 1, dtype=bool)
    is_p[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_p[p]:
            is_p[p * p::p] = False
    return np.flatnonzero(is_p).astype(np.int64)


def spf_sieve(limit: int) -> np.ndarray:
    """Smallest prime factor for 0..limit (entries 0 and 1 are 0 and 1)."""
    spf = np.zeros(limit + 1, dtype=np.int64)
    if limit >= 1:
        spf[1] = 1
    for p in range(2, limit + 1):
        if p * p > limit:
            break
        if spf[p] == 0:
            block = spf[p * p::p]
            block[block == 0] = p
    rest = np.flatnonzero(spf == 0)
    spf[rest] = rest
    return spf


@lru_cache(maxsize=1)
def _small_primes() -> tuple[int, ...]:
    return tuple(int(p) for p in prime_sieve(TRIAL_LIMIT))


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    for p in _small_primes()[:40]:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_BASES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def _brent(n: int) -> int:
    # fixed start values keep the split deterministic
    for c in range(1, 200):
        y, m, g, r, q = 2, 128, 1, 1, 1
        x = ys = y
        while g == 1:
            x = y
            for _ in range(r):
                y = (y * y + c) % n
            k = 0
            while k < r and g == 1:
                ys = y
                for _ in range(min(m, r - k)):
                    y = (y * y + c) % n
                    q = q * abs(x - y) % n
                g = math.gcd(q, n)
                k += m
            r *= 2
        if g == n:
            g = 1
            while g == 1:
                ys = (ys * ys + c) % n
                g = math.gcd(abs(x - ys), n)
        if g != n:
            return g
    raise ArithmeticError(f"could not split {n}")


def _split(n: int, out: dict) -> None:
    if n == 1:
        return
    if is_prime(n):
        out[n] = out.get(n, 0) + 1
        return
    d = _brent(n)
    _split(d, out)
    _split(n // d, out)


@dataclass(frozen=True)
class Factorization:
    n: int
    factors: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prod = 1
        last = 1
        for p, e in self.factors:
            if p <= last or e < 1:
                raise ValueError("factors must have increasing primes and positive exponents")
            last = p
            prod *= p**e
        if prod != self.n:
            raise ValueError("factor product does not match n")

    @property
    def primes(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.factors)

    def as_dict(self) -> dict[int, int]:
        return dict(self.factors)


@lru_cache(maxsize=1 << 16)
def factorize(n: int) -> Factorization:
    if not isinstance(n, int) or isinstance(n, bool):
        raise TypeError("n must be an int")
    if n < 1:
        raise ValueError("factorize needs n >= 1")
    if n >= FACTOR_BOUND:
        raise ValueError(f"n exceeds the factorisation bound 2^64: {n}")
    found: dict[int, int] = {}
    m = n
    for p in _small_primes():
        if p * p > m:
            break
        if m % p == 0:
            e = 0
            while m % p == 0:
                m //= p
                e += 1
            found[p] = e
    if m > 1:
        if m < TRIAL_LIMIT * TRIAL_LIMIT:
            found[m] = found.get(m, 0) + 1
        else:
            _split(m, found)
    return Factorization(n, tuple(sorted(found.items())))


def valuation(n: int, p: int) -> int:
    """p-adic valuation of a nonzero integer."""
    if n == 0:
        raise ValueError("valuation of 0 is infinite")
    n = abs(n)
    k = 0
    while n % p == 0:
        n //= p
        k += 1
    return k


def euler_phi(n: int) -> int:
    out = n
    for p, _ in factorize(n).factors:
        out = out // p * (p - 1)
    return out


def moebius(n: int) -> int:
    fs = factorize(n).factors
    if any(e > 1 for _, e in fs):
        return 0
    return -1 if len(fs) % 2 else 1


def smooth_part(n: int, t) -> int:
    """Largest divisor of n whose prime factors are all <= t."""
    t = Fraction(t)
    out = 1
    for p, e in factorize(n).factors:
        if p <= t:
            out *= p**e
    return out


def unit_fraction_sum(primes) -> Fraction:
    """Exact sum of 1/p over the given primes."""
    primes = list(primes)
    if not primes:
        return Fraction(0)
    den = math.prod(primes)
    return Fraction(sum(den // p for p in primes), den)


@dataclass(frozen=True)
class PairDecomposition:
    q: int
    r: int
    ell: int
    m: int
    n: int
    delta: Fraction
    Delta: Fraction
    s: int
    D: Fraction
    t: Fraction
    Lt: Fraction
    omega_t: int


def split_primes(q: int, r: int) -> list[int]:
    """Primes dividing qr/gcd(q,r)^2, i.e. those with differing valuations."""
    fq = factorize(q).as_dict()
    fr = factorize(r).as_dict()
    return sorted(p for p in set(fq) | set(fr) if fq.get(p, 0) != fr.get(p, 0))


def D_value(q: int, r: int, psi) -> Fraction:
    return max(r * psi(q), q * psi(r)) / math.gcd(q, r)


def L_value(q: int, r: int, t) -> Fraction:
    t = Fraction(t)
    return unit_fraction_sum(p for p in split_primes(q, r) if p > t)


def omega_value(q: int, r: int, t) -> int:
    t = Fraction(t)
    return sum(1 for p in split_primes(q, r) if p <= t)


def pair_decompose(q: int, r: int, psi, t=1) -> PairDecomposition:
    psi.check_domain(q)
    psi.check_domain(r)
    t = Fraction(t)
    fq = factorize(q).as_dict()
    fr = factorize(r).as_dict()
    ell = m = n = 1
    for p in set(fq) | set(fr):
        a, b = fq.get(p, 0), fr.get(p, 0)
        if a == b:
            ell *= p**a
        else:
            m *= p ** min(a, b)
            n *= p ** max(a, b)
    aq, ar = psi(q) / q, psi(r) / r
    delta, Delta = min(aq, ar), max(aq, ar)
    split = split_primes(q, r)
    return PairDecomposition(
        q=q,
        r=r,
        ell=ell,
        m=m,
        n=n,
        delta=delta,
        Delta=Delta,
        s=1 if ell % 2 == 0 else 0,
        D=D_value(q, r, psi),
        t=t,
        Lt=unit_fraction_sum(p for p in split if p > t),
        omega_t=sum(1 for p in split if p <= t),
    )
