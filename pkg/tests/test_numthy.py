import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import factor, phi
from quantds.approx import psi_half, psi_random
from quantds.numthy import (
    FACTOR_BOUND,
    D_value,
    L_value,
    euler_phi,
    factorize,
    is_prime,
    moebius,
    omega_value,
    pair_decompose,
    smooth_part,
    split_primes,
    spf_sieve,
    valuation,
)


@pytest.mark.parametrize("n,expected", [(1, ()), (12, ((2, 2), (3, 1))), (97, ((97, 1),))])
def test_factorize_examples(n, expected):
    assert factorize(n).factors == expected


@pytest.mark.parametrize("n,expected", [(1, 1), (12, 4), (7, 6)])
def test_phi_examples(n, expected):
    assert euler_phi(n) == expected


@pytest.mark.parametrize("n,expected", [(1, 1), (6, 1), (12, 0), (30, -1)])
def test_moebius_examples(n, expected):
    assert moebius(n) == expected


def test_smooth_part_examples():
    assert smooth_part(360, 3) == 72
    assert smooth_part(360, 1) == 1
    assert smooth_part(97, 100) == 97


def test_factorize_large_semiprime():
    p, q = 4294967291, 4294967279
    assert factorize(p * q).factors == ((q, 1), (p, 1))
    assert is_prime(2**61 - 1)
    assert not is_prime(3215031751)  # strong pseudoprime to bases 2, 3, 5, 7


def test_factorize_guard():
    with pytest.raises(ValueError):
        factorize(FACTOR_BOUND)
    with pytest.raises(ValueError):
        factorize(0)


def test_phi_matches_count_below_2000():
    assert all(euler_phi(n) == phi(n) for n in range(1, 2001))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**5))
def test_phi_matches_count(n):
    assert euler_phi(n) == phi(n)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 10**12))
def test_factorization_is_prime_power_product(n):
    f = factorize(n)
    assert math.prod(p**e for p, e in f.factors) == n
    assert all(is_prime(p) for p in f.primes)


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 10**6))
def test_factorize_matches_trial_division(n):
    assert factorize(n).as_dict() == factor(n)


def test_spf_sieve():
    spf = spf_sieve(1000)
    for n in range(2, 1001):
        assert spf[n] == min(factor(n))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 10**6), st.integers(1, 2000))
def test_smooth_times_rough(n, t):
    s = smooth_part(n, t)
    rough = n // s
    assert s * rough == n
    assert all(p > t for p in factor(rough))
    assert all(p <= t for p in factor(s))


def test_valuation():
    assert valuation(72, 2) == 3 and valuation(72, 3) == 2 and valuation(72, 5) == 0


def test_pair_decompose_examples():
    psi = psi_half(20)
    d = pair_decompose(12, 18, psi, 1)
    assert (d.ell, d.m, d.n) == (1, 6, 36)
    assert d.Lt == Fraction(5, 6) and d.omega_t == 0
    assert pair_decompose(4, 6, psi).D == Fraction(3, 2)
    same = pair_decompose(9, 9, psi, 5)
    assert (same.ell, same.m, same.n, same.Lt, same.omega_t) == (9, 1, 1, 0, 0)
    assert same.D == psi(9)


def test_pair_decompose_identities_exhaustive():
    psi = psi_half(500)
    for q in range(1, 501):
        for r in range(1, 501):
            d = pair_decompose(q, r, psi)
            g = math.gcd(q, r)
            assert d.ell * d.m == g
            assert d.ell**2 * d.m * d.n == q * r
            assert math.gcd(d.n, d.ell) == 1


@settings(max_examples=300, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(1, 50), st.integers(0, 2**32))
def test_symmetry(q, r, t, seed):
    psi = psi_random(300, Fraction(3, 4), 1, seed)
    assert D_value(q, r, psi) == D_value(r, q, psi)
    assert L_value(q, r, t) == L_value(r, q, t)
    assert omega_value(q, r, t) == omega_value(r, q, t)
    assert split_primes(q, r) == [p for p in sorted(set(factor(q)) | set(factor(r)))
                                  if factor(q).get(p, 0) != factor(r).get(p, 0)]
