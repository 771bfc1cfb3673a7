"""Weighted pair sums over moduli with small D, and the variance checks built on them.

Each pair (q, r) carries weight mu(q) mu(r) with mu(q) = psi(q) phi(q) / q.
The sums restrict to D(q, r) <= y and optionally to a large L_t or a
large omega_t.  Sums are exact: weights are scaled to one common
denominator and added as integers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .anatomy import small_prime_threshold
from .approx import DEFAULT_MAX_PAIRS, ApproxFunction, psi_mass, psi_prime, variance_exact
from .errors import DomainError, ResourceLimitError
from .numthy import euler_phi, factorize


def weight(q: int, psi: ApproxFunction) -> Fraction:
    return psi(q) * euler_phi(q) / q


def _split(fq: dict, fr: dict) -> list[int]:
    return [p for p in set(fq) | set(fr) if fq.get(p, 0) != fr.get(p, 0)]


def _L_at_least(split, t: Fraction, s: Fraction) -> bool:
    big = [p for p in split if p > t]
    approx = sum(1.0 / p for p in big)
    cut = 1.0 / float(s)
    if abs(approx - cut) > 1e-9:
        return approx >= cut
    return sum((Fraction(1, p) for p in big), Fraction(0)) >= 1 / s


def _pair_sum(Q: int, psi: ApproxFunction, y, keep=None, max_pairs: int = DEFAULT_MAX_PAIRS) -> Fraction:
    psi.check_domain(Q)
    y = Fraction(y)
    qs = psi.support(Q)
    if len(qs) ** 2 > max_pairs:
        raise ResourceLimitError(f"{len(qs) ** 2} pairs exceed the guard of {max_pairs}")
    if not qs:
        return Fraction(0)
    mus = [weight(q, psi) for q in qs]
    L = math.lcm(*(m.denominator for m in mus))
    scaled = np.array([m.numerator * (L // m.denominator) for m in mus], dtype=object)
    arr = np.array(qs, dtype=np.int64)
    num = np.array([psi.values[q].numerator for q in qs], dtype=object)
    den = np.array([psi.values[q].denominator for q in qs], dtype=object)
    facs = [factorize(q).as_dict() for q in qs] if keep else None
    total = 0
    for i, q in enumerate(qs):
        g = np.gcd(arr, q).astype(object)
        # D <= y  <=>  max(r psi(q), q psi(r)) <= y gcd(q, r), cleared of denominators
        lhs1 = arr.astype(object) * num[i] * den * y.denominator
        lhs2 = q * num * den[i] * y.denominator
        rhs = y.numerator * g * den[i] * den
        ok = (lhs1 <= rhs) & (lhs2 <= rhs)
        idx = np.flatnonzero(ok.astype(bool))
        if keep is not None:
            idx = [j for j in idx.tolist() if keep(q, qs[j], facs[i], facs[j])]
        if len(idx):
            total += scaled[i] * int(scaled[list(idx)].sum())
    return Fraction(total, L * L)


def bilinear_sum_D(Q: int, psi: ApproxFunction, y, max_pairs: int = DEFAULT_MAX_PAIRS) -> Fraction:
    return _pair_sum(Q, psi, y, None, max_pairs)


def bilinear_sum_L(Q: int, psi: ApproxFunction, y, t, s, max_pairs: int = DEFAULT_MAX_PAIRS) -> Fraction:
    t, s = Fraction(t), Fraction(s)
    if t < 1 or s < 1:
        raise DomainError("need t, s >= 1")
    return _pair_sum(Q, psi, y, lambda q, r, fq, fr: _L_at_least(_split(fq, fr), t, s), max_pairs)


def bilinear_sum_omega(Q: int, psi: ApproxFunction, y, t, kappa=None, threshold=None,
                       max_pairs: int = DEFAULT_MAX_PAIRS) -> Fraction:
    """Pairs with omega_t(q, r) >= kappa log t (or >= an explicit threshold)."""
    t = Fraction(t)
    if t < 1:
        raise DomainError("need t >= 1")
    if (kappa is None) == (threshold is None):
        raise DomainError("give exactly one of kappa and threshold")
    need = small_prime_threshold(t, kappa) if kappa is not None else math.ceil(Fraction(threshold))
    return _pair_sum(
        Q, psi, y, lambda q, r, fq, fr: sum(1 for p in _split(fq, fr) if p <= t) >= need, max_pairs
    )


@dataclass(frozen=True)
class BilinearReport:
    Q: int
    y: Fraction
    t: Fraction | None
    s: Fraction | None
    kappa: Fraction | None
    lhs: Fraction
    rhs_shape: float
    fitted_constant: float


def envelope(y, Psi, eps) -> float:
    return float(y) ** (1 - float(eps)) * float(Psi) ** (1 + float(eps))


def bilinear_report(Q, psi, y, eps=Fraction(1, 2), t=None, s=None, kappa=None, C=1) -> BilinearReport:
    """One grid point; the decay factor is e^{-C t/s} with an L condition, t^{-C} with an omega one."""
    Psi = psi_mass(Q, psi)
    shape = envelope(y, Psi, eps)
    if s is not None:
        lhs = bilinear_sum_L(Q, psi, y, t, s)
        shape *= math.exp(-C * float(Fraction(t) / Fraction(s)))
    elif kappa is not None:
        lhs = bilinear_sum_omega(Q, psi, y, t, kappa=kappa)
        shape *= float(Fraction(t)) ** (-C)
    else:
        lhs = bilinear_sum_D(Q, psi, y)
    fitted = float(lhs) / shape if shape > 0 else 0.0
    return BilinearReport(
        Q=Q,
        y=Fraction(y),
        t=None if t is None else Fraction(t),
        s=None if s is None else Fraction(s),
        kappa=None if kappa is None else Fraction(kappa),
        lhs=lhs,
        rhs_shape=shape,
        fitted_constant=fitted,
    )


@dataclass(frozen=True)
class VarianceBound:
    Q: int
    variance: Fraction
    Psi: Fraction
    ratio: float


def variance_bound_check(Q: int, psi: ApproxFunction, eps=Fraction(1, 2), workers: int = 1) -> VarianceBound:
    """(Var - Psi) / Psi^{1+eps} when Psi >= 1, else Var / Psi (0 when Psi = 0)."""
    rep = variance_exact(Q, psi, workers=workers)
    Psi, var = rep.Psi, rep.variance
    if Psi >= 1:
        ratio = float(var - Psi) / float(Psi) ** (1 + float(eps))
    elif Psi > 0:
        ratio = float(var / Psi)
    else:
        ratio = 0.0
    return VarianceBound(Q, var, Psi, ratio)


def optimality_gap(Q: int, workers: int = 1) -> Fraction:
    """Var - Psi(Q) for psi(q) = 1/q on primes."""
    rep = variance_exact(Q, psi_prime(Q), workers=workers)
    return rep.variance - rep.Psi
