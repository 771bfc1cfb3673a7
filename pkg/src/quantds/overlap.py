"""Overlap of two approximation sets: exact closed form, bounds, pair classes.

The closed form writes |A_q & A_r| as a sum of the tent-like weight w over
the spacings between a/q and b/r, grouped by the arithmetic of (q, r)
through the decomposition (ell, m, n).  It is checked against the
interval sweep in ``approx.intersect_measure``, which shares no code with
it.

The two upper bounds carry an unspecified constant K.  ``calibrate``
finds the least K that makes a bound hold on a grid of pairs and reports
each pair's ratio exact/bound.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction

import mpmath
import numpy as np

from .errors import DomainError
from .numthy import D_value, euler_phi, factorize, pair_decompose, split_primes, unit_fraction_sum

REL_BUDGET = 1e-12


@dataclass(frozen=True)
class OverlapWeight:
    delta: Fraction
    Delta: Fraction

    def __post_init__(self):
        if not 0 <= self.delta <= self.Delta:
            raise DomainError("weight needs 0 <= delta <= Delta")

    def __call__(self, y) -> Fraction:
        return weight_eval(self, y)


def weight_eval(w: OverlapWeight, y) -> Fraction:
    y = Fraction(y)
    if y < 0:
        raise DomainError("weight is evaluated at y >= 0 only")
    if y <= w.Delta - w.delta:
        return 2 * w.delta
    if y <= w.Delta + w.delta:
        return w.Delta + w.delta - y
    return Fraction(0)


def weight_sum(w: OverlapWeight, rho) -> Fraction:
    """sum_{i >= 1} w(rho i), summed in closed form over plateau and ramp."""
    rho = Fraction(rho)
    if rho <= 0:
        raise DomainError("rho must be positive")
    if w.delta == 0:
        return Fraction(0)
    i1 = math.floor((w.Delta - w.delta) / rho)
    i2 = math.floor((w.Delta + w.delta) / rho)
    ramp = i2 - i1
    ramp_index_sum = Fraction(i2 * (i2 + 1) - i1 * (i1 + 1), 2)
    return 2 * w.delta * i1 + (w.Delta + w.delta) * ramp - rho * ramp_index_sum


def measure_A(q: int, psi) -> Fraction:
    return 2 * euler_phi(q) * psi(q) / q


def _odd_primes(n: int) -> list[int]:
    return [p for p, _ in factorize(n).factors if p > 2]


def _decompose(q: int, r: int):
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
    return ell, m, n


def _tally(c2: int, c1: int, n: int, rad: int):
    """Per g = gcd(c, rad): plateau count, ramp count, ramp sum of c, over c <= c2 coprime to n."""
    out: dict[int, list[int]] = {}
    if c2 <= 64:
        for c in range(1, c2 + 1):
            if math.gcd(c, n) != 1:
                continue
            row = out.setdefault(math.gcd(c, rad), [0, 0, 0])
            if c <= c1:
                row[0] += 1
            else:
                row[1] += 1
                row[2] += c
        return out
    c = np.arange(1, c2 + 1, dtype=np.int64)
    c = c[np.gcd(c, n) == 1]
    g = np.gcd(c, rad)
    flat = c <= c1
    for gv in np.unique(g).tolist():
        sel = g == gv
        ramp = c[sel & ~flat]
        out[gv] = [int(np.count_nonzero(sel & flat)), int(ramp.size), int(ramp.sum())]
    return out


def closed_form_overlap(q: int, r: int, psi) -> Fraction:
    if q == r:
        raise DomainError("closed form needs q != r")
    psi.check_domain(q)
    psi.check_domain(r)
    aq, ar = psi(q) / q, psi(r) / r
    delta, Delta = min(aq, ar), max(aq, ar)
    if delta == 0:
        return Fraction(0)
    ell, m, n = _decompose(q, r)
    s = 1 if ell % 2 == 0 else 0
    odd = _odd_primes(ell)
    front = Fraction(2 ** (s + 1) * euler_phi(m) * euler_phi(ell) ** 2, ell)
    for p in odd:
        front *= 1 - Fraction(1, (p - 1) ** 2)
    # w is evaluated at c / scale with scale = ell n / 2^s, an integer
    scale = (ell * n) >> s
    lo, hi = (Delta - delta) * scale, (Delta + delta) * scale
    c1 = lo.numerator // lo.denominator
    c2 = hi.numerator // hi.denominator
    tally = _tally(c2, c1, n, math.prod(odd))
    total = Fraction(0)
    top = Delta + delta
    for g in sorted(tally):
        flat, ramp, ramp_c = tally[g]
        h = Fraction(1)
        for p in _odd_primes(g):
            h *= Fraction(p - 1, p - 2)
        total += h * (2 * delta * flat + top * ramp - Fraction(ramp_c, scale))
    return front * total


def generic_bound(q: int, r: int, psi, t, K: float) -> float:
    """1_{D >= 1/2} |A_q||A_r| e^{2 L_t} (1 + K 2^{omega_t} log(4D) / D)."""
    if q == r:
        raise DomainError("bound is for q != r")
    pd = pair_decompose(q, r, psi, t)
    if pd.D < Fraction(1, 2):
        return 0.0
    lam = measure_A(q, psi) * measure_A(r, psi)
    D = float(pd.D)
    return float(lam) * math.exp(2 * float(pd.Lt)) * (1 + K * 2**pd.omega_t * math.log(4 * D) / D)


def pv_bound(q: int, r: int, psi, K: float) -> float:
    """K 1_{D >= 1/2} |A_q||A_r| e^{L_D}."""
    if q == r:
        raise DomainError("bound is for q != r")
    D = D_value(q, r, psi)
    if D < Fraction(1, 2):
        return 0.0
    lam = measure_A(q, psi) * measure_A(r, psi)
    L = unit_fraction_sum(p for p in split_primes(q, r) if p > D)
    return K * float(lam) * math.exp(float(L))


def _omega_at_most(omega: int, eps: Fraction, D: Fraction) -> bool:
    """omega <= (eps/4) log(2D), with a high-precision recheck near ties."""
    rhs = float(eps) / 4 * math.log(2 * float(D))
    if abs(omega - rhs) > 1e-9:
        return omega <= rhs
    with mpmath.workdps(60):
        exact_rhs = mpmath.mpf(eps.numerator) / eps.denominator / 4 * mpmath.log(
            2 * mpmath.mpf(D.numerator) / D.denominator
        )
        return omega <= exact_rhs


def classify_pair(q: int, r: int, psi, eps) -> str:
    if q == r:
        raise DomainError("classification is for q != r")
    eps = Fraction(eps)
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    D = D_value(q, r, psi)
    if D < Fraction(1, 2):
        return "excluded"
    split = split_primes(q, r)
    D2 = D * D
    L = unit_fraction_sum(p for p in split if p > D2)
    if L > 1 / D:
        return "E2"
    omega = sum(1 for p in split if p <= D2)
    return "E1" if _omega_at_most(omega, eps, D) else "E3"


@dataclass(frozen=True)
class OverlapBoundReport:
    q: int
    r: int
    exact_overlap: Fraction
    product_measure: Fraction
    generic_bound_value: float
    pv_bound_value: float
    class_tag: str
    eps: Fraction


def bound_report(q, r, psi, t, K_generic, K_pv, eps) -> OverlapBoundReport:
    return OverlapBoundReport(
        q=q,
        r=r,
        exact_overlap=closed_form_overlap(q, r, psi),
        product_measure=measure_A(q, psi) * measure_A(r, psi),
        generic_bound_value=generic_bound(q, r, psi, t, K_generic),
        pv_bound_value=pv_bound(q, r, psi, K_pv),
        class_tag=classify_pair(q, r, psi, eps),
        eps=Fraction(eps),
    )


@dataclass(frozen=True)
class CalibrationRow:
    q: int
    r: int
    D: Fraction
    exact: Fraction
    bound: float
    ratio: float


@dataclass(frozen=True)
class Calibration:
    kind: str
    t: Fraction | None
    K: float
    worst: tuple[int, int] | None
    rows: tuple[CalibrationRow, ...]
    violations: int


@dataclass(frozen=True)
class PairRow:
    q: int
    r: int
    D: Fraction
    exact: Fraction
    lam: Fraction
    split: tuple[int, ...]


def _pair_rows(args):
    pairs, psi = args
    out = []
    for q, r in pairs:
        D = D_value(q, r, psi)
        if D < Fraction(1, 2):
            continue
        lam = measure_A(q, psi) * measure_A(r, psi)
        if lam == 0:
            continue
        out.append(PairRow(q, r, D, closed_form_overlap(q, r, psi), lam, tuple(split_primes(q, r))))
    return out


def pair_table(pairs, psi, workers: int = 1, chunks: int = 16) -> list[PairRow]:
    """Exact overlaps for the pairs with D >= 1/2 and nonzero measures, sorted."""
    pairs = list(pairs)
    jobs = [(pairs[i::chunks], psi) for i in range(chunks)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_pair_rows, jobs))
    else:
        parts = [_pair_rows(j) for j in jobs]
    return sorted((x for part in parts for x in part), key=lambda x: (x.q, x.r))


def _terms(row: PairRow, kind: str, t: Fraction):
    if kind == "generic":
        L = unit_fraction_sum(p for p in row.split if p > t)
        omega = sum(1 for p in row.split if p <= t)
        D = float(row.D)
        return float(row.lam) * math.exp(2 * float(L)), 2**omega * math.log(4 * D) / D
    L = unit_fraction_sum(p for p in row.split if p > row.D)
    return float(row.lam) * math.exp(float(L)), 1.0


def calibrate_table(table, kind: str = "generic", t=1) -> Calibration:
    """Least K with exact <= bound on every row of the table.

    generic: exact <= base (1 + K c) with base = lam e^{2 L_t}, so K >= (exact/base - 1)/c.
    pv:      exact <= K base with base = lam e^{L_D}, so K >= exact/base.
    """
    if kind not in ("generic", "pv"):
        raise DomainError(f"unknown bound {kind!r}")
    t = Fraction(t)
    terms = [(row, *_terms(row, kind, t)) for row in table]
    K = 0.0
    worst = None
    for row, base, coeff in terms:
        need = (float(row.exact) / base - 1) / coeff if kind == "generic" else float(row.exact) / base
        if need > K:
            K, worst = need, (row.q, row.r)
    rows = []
    bad = 0
    for row, base, coeff in terms:
        bound = base * (1 + K * coeff) if kind == "generic" else K * base
        ex = float(row.exact)
        ratio = ex / bound if bound > 0 else (0.0 if ex == 0 else math.inf)
        if ex > bound * (1 + REL_BUDGET):
            bad += 1
        rows.append(CalibrationRow(row.q, row.r, row.D, row.exact, bound, ratio))
    return Calibration(kind, t if kind == "generic" else None, K, worst, tuple(rows), bad)


def calibrate(pairs, psi, kind: str = "generic", t=1, workers: int = 1) -> Calibration:
    return calibrate_table(pair_table(pairs, psi, workers), kind, t)
