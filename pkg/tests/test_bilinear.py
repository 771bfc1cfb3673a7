from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from quantds.approx import psi_const, psi_half, psi_prime, psi_random
from quantds.bilinear import (
    bilinear_report,
    bilinear_sum_D,
    bilinear_sum_L,
    bilinear_sum_omega,
    optimality_gap,
    variance_bound_check,
    weight,
)
from quantds.errors import DomainError, ResourceLimitError

F = Fraction


def test_sum_D_examples():
    psi = psi_half(3)
    assert bilinear_sum_D(3, psi, F(3, 2)) == F(169, 144)
    assert bilinear_sum_D(3, psi, F(1, 4)) == 0
    assert bilinear_sum_D(9, psi_const(9, 0), 100) == 0


def test_sum_omega_example():
    psi = psi_half(3)
    want = 2 * (F(1, 2) * F(1, 4) + F(1, 2) * F(1, 3) + F(1, 4) * F(1, 3))
    assert bilinear_sum_omega(3, psi, F(3, 2), 3, threshold=1) == want
    assert bilinear_sum_omega(3, psi, F(3, 2), 3, kappa=1 / F(10986122886681098, 10**16)) == want


def test_sum_L_examples():
    psi = psi_half(40)
    # no pair has a prime above Q^2 in qr / gcd^2
    assert bilinear_sum_L(40, psi, 100, 1601, 1) == 0
    diag = sum((weight(q, psi) ** 2 for q in range(1, 41) if oracles.D(q, q, psi) <= 7), F(0))
    assert bilinear_sum_L(40, psi, 7, 1, 10**9) == bilinear_sum_D(40, psi, 7) - diag


def test_vacuous_conditions_exhaustive():
    for Q in (1, 10, 37, 100):
        for psi in (psi_half(Q), psi_random(Q, F(1, 2), 1, 1)):
            for y in (F(1, 2), F(3), F(Q)):
                D = bilinear_sum_D(Q, psi, y)
                assert bilinear_sum_omega(Q, psi, y, 2, threshold=0) == D
                assert bilinear_sum_omega(Q, psi, y, 7, threshold=F(-1, 2)) == D
                diag = sum((weight(q, psi) ** 2 for q in psi.support(Q) if oracles.D(q, q, psi) <= y), F(0))
                assert bilinear_sum_L(Q, psi, y, 1, 10**12) == D - diag


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 18), st.fractions(F(1, 4), 20, max_denominator=8), st.integers(1, 12),
       st.integers(1, 4), st.integers(0, 2**32))
def test_sums_match_direct_enumeration(Q, y, t, s, seed):
    psi = psi_random(18, F(3, 4), 1, seed)

    def big_L(q, r):
        return sum((F(1, p) for p in oracles.split(q, r) if p > t), F(0)) >= F(1) / s

    def many(q, r):
        return sum(1 for p in oracles.split(q, r) if p <= t) >= 2

    assert bilinear_sum_D(Q, psi, y) == oracles.bilinear_D(Q, psi, y)
    assert bilinear_sum_L(Q, psi, y, t, s) == oracles.bilinear_D(Q, psi, y, big_L)
    assert bilinear_sum_omega(Q, psi, y, t, threshold=2) == oracles.bilinear_D(Q, psi, y, many)


def test_monotone_in_y_and_Q():
    psi = psi_random(60, F(1, 2), 1, 3)
    ys = [F(k, 4) for k in range(1, 40)]
    for Q in (20, 60):
        vals = [bilinear_sum_D(Q, psi, y) for y in ys]
        assert vals == sorted(vals)
    for y in (F(1), F(5)):
        vals = [bilinear_sum_D(Q, psi, y) for Q in range(1, 61)]
        assert vals == sorted(vals)


def test_guards():
    with pytest.raises(ResourceLimitError):
        bilinear_sum_D(50, psi_half(50), 1, max_pairs=10)
    with pytest.raises(DomainError):
        bilinear_sum_L(5, psi_half(5), 1, 0, 1)
    with pytest.raises(DomainError):
        bilinear_sum_omega(5, psi_half(5), 1, 2)


def test_report():
    rep = bilinear_report(3, psi_half(3), F(3, 2))
    assert rep.lhs == F(169, 144)
    assert rep.fitted_constant == pytest.approx(float(F(169, 144)) / (1.5**0.5 * (13 / 6) ** 1.5))


def test_optimality_examples():
    assert optimality_gap(1) == 0
    assert optimality_gap(2) == F(-1, 4)
    assert optimality_gap(100) == pytest.approx(-0.21931925591579773, abs=1e-15)
    assert optimality_gap(1000) == pytest.approx(-0.45967012651370026, abs=1e-15)


def test_variance_bound_check_examples():
    rep = variance_bound_check(1, psi_half(1))
    assert rep.variance == 0 and rep.ratio <= 0
    zero = variance_bound_check(10, psi_const(10, 0))
    assert (zero.variance, zero.Psi, zero.ratio) == (0, 0, 0.0)
    pr = variance_bound_check(1000, psi_prime(1000))
    assert abs(pr.ratio) < 0.1
