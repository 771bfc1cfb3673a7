"""Counting integers by the shape of their prime factorisation.

Brute-force enumeration over n <= x: mean values of multiplicative
functions (via a smallest-prime-factor sieve), integers whose large prime
factors have a big reciprocal sum, and integers with many small prime
factors.  The last two use a multiples sieve over primes, then recheck
exactly any n whose float total lies within 1e-9 of the threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .errors import DomainError, ResourceLimitError
from .numthy import factorize, prime_sieve, spf_sieve, unit_fraction_sum

MAX_X = 10**7


def _guard(x: int, max_x: int) -> None:
    if x < 1:
        raise DomainError("x must be >= 1")
    if x > max_x:
        raise ResourceLimitError(f"x={x} exceeds the enumeration guard {max_x}")


def divisor_bound(k: int, e: int) -> int:
    """tau_k(p^e), the number of ways to write p^e as an ordered k-fold product."""
    return math.comb(e + k - 1, k - 1)


def mult_mean_value(f, x: int, k: int | None = None, max_x: int = MAX_X):
    """sum_{n <= x} f(n) for f multiplicative, given as f(p, e) on prime powers.

    When k is given every value used is checked against 0 <= f(p^e) <= tau_k(p^e).
    Integer-valued f gives an int, otherwise a Fraction.
    """
    _guard(x, max_x)
    spf = spf_sieve(x).tolist()
    cache: dict[tuple[int, int], object] = {}

    def fpe(p, e):
        key = (p, e)
        if key not in cache:
            v = f(p, e)
            if not isinstance(v, int):
                v = Fraction(v)
            if k is not None and not 0 <= v <= divisor_bound(k, e):
                raise DomainError(f"f({p}^{e}) = {v} outside [0, tau_{k}]")
            cache[key] = v
        return cache[key]

    vals = [0] * (x + 1)
    vals[1] = 1
    total = 1
    for n in range(2, x + 1):
        p = spf[n]
        m, e = n, 0
        while m % p == 0:
            m //= p
            e += 1
        v = fpe(p, e) * vals[m]
        vals[n] = v
        total += v
    return total


def mean_value_envelope(f, x: int) -> float:
    """x exp(sum_{p <= x} (f(p) - 1)/p)."""
    s = sum((float(f(int(p), 1)) - 1) / int(p) for p in prime_sieve(x))
    return x * math.exp(s)


def _large_L_sums(x: int, t: Fraction) -> np.ndarray:
    sums = np.zeros(x + 1)
    for p in prime_sieve(x).tolist():
        if p > t:
            sums[p::p] += 1.0 / p
    return sums


def _count_at_least(values: np.ndarray, cut: float, exact_value, exact_cut) -> int:
    hit = values >= cut
    shaky = np.flatnonzero(np.abs(values - cut) < 1e-9)
    for n in shaky.tolist():
        hit[n] = exact_value(n) >= exact_cut
    return int(np.count_nonzero(hit[1:]))


def count_large_L(x: int, t, s, max_x: int = MAX_X) -> int:
    """#{n <= x : sum_{p | n, p > t} 1/p >= 1/s}."""
    _guard(x, max_x)
    t, s = Fraction(t), Fraction(s)
    if t < 1 or s < 1:
        raise DomainError("need t, s >= 1")
    sums = _large_L_sums(x, t)

    def exact(n):
        if n < 2:
            return Fraction(0)
        return unit_fraction_sum(p for p in factorize(n).primes if p > t)

    return _count_at_least(sums, float(1 / s), exact, 1 / s)


def small_prime_threshold(t, kappa) -> int:
    """Least integer m with m >= kappa log t."""
    t, kappa = Fraction(t), Fraction(kappa)
    v = float(kappa) * math.log(float(t))
    near = round(v)
    if abs(v - near) > 1e-9:
        return math.ceil(v)
    with mpmath.workdps(60):
        ev = mpmath.mpf(kappa.numerator) / kappa.denominator * mpmath.log(
            mpmath.mpf(t.numerator) / t.denominator
        )
    return near if ev <= near else near + 1


def count_many_small_primes(x: int, t, kappa=None, threshold=None, max_x: int = MAX_X) -> int:
    """#{n <= x : #{p | n : p <= t} >= kappa log t}.

    ``threshold`` replaces kappa log t by an explicit real cut.
    """
    _guard(x, max_x)
    t = Fraction(t)
    if t < 1:
        raise DomainError("need t >= 1")
    if (kappa is None) == (threshold is None):
        raise DomainError("give exactly one of kappa and threshold")
    if kappa is not None:
        if Fraction(kappa) <= 0:
            raise DomainError("kappa must be positive")
        need = small_prime_threshold(t, kappa)
    else:
        need = math.ceil(Fraction(threshold))
    counts = np.zeros(x + 1, dtype=np.int64)
    for p in prime_sieve(min(x, math.floor(t))).tolist():
        counts[p::p] += 1
    return int(np.count_nonzero(counts[1:] >= need))


@dataclass(frozen=True)
class GridRow:
    x: int
    t: Fraction
    param: Fraction
    count: int
    bound: float
    ratio: float


def large_L_grid(xs, ts, ss) -> list[GridRow]:
    """Rows with bound x e^{-t/s}."""
    rows = []
    for x in xs:
        for t in ts:
            for s in ss:
                c = count_large_L(x, t, s)
                b = x * math.exp(-float(Fraction(t) / Fraction(s)))
                rows.append(GridRow(x, Fraction(t), Fraction(s), c, b, c / b))
    return rows


def small_primes_grid(xs, ts, kappas, C: int = 2) -> list[GridRow]:
    """Rows with bound x t^{-C}."""
    rows = []
    for x in xs:
        for t in ts:
            for kappa in kappas:
                c = count_many_small_primes(x, t, kappa=kappa)
                b = x * float(Fraction(t)) ** (-C)
                rows.append(GridRow(x, Fraction(t), Fraction(kappa), c, b, c / b))
    return rows
