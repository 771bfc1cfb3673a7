import math
from fractions import Fraction

import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

import oracles
from quantds.approx import (
    ApproxFunction,
    RationalIntervalUnion,
    build_A,
    count_N,
    dyadic_cutoffs,
    intersect,
    intersect_measure,
    parse_family,
    psi_const,
    psi_from_file,
    psi_half,
    psi_mass,
    psi_prime,
    psi_random,
    square_integral,
    variance_exact,
    variance_montecarlo,
)
from quantds.errors import ConfigError, DomainError, ResourceLimitError
from quantds.numthy import D_value, euler_phi

F = Fraction
RANDOM_FAMILIES = [(F(1, 2), F(1), 1), (F(3, 4), F(1, 2), 7), (F(1), F(1), 2024)]


def test_build_A_examples():
    psi = psi_half(3)
    assert build_A(2, psi).intervals == ((F(1, 4), F(3, 4)),)
    assert build_A(1, psi).measure == 1
    assert build_A(1, psi).intervals == ((F(0), F(1, 2)), (F(1, 2), F(1)))
    assert len(build_A(3, psi_prime(3))) == 2
    assert build_A(4, psi_prime(4)).measure == 0


def test_intersect_examples():
    psi = psi_half(3)
    A2, A3 = build_A(2, psi), build_A(3, psi)
    assert intersect_measure(A2, A3) == F(1, 2)
    assert intersect_measure(A2, RationalIntervalUnion.empty()) == 0
    assert intersect_measure(A3, A3) == A3.measure
    assert intersect(A2, A3).measure == F(1, 2)


def test_count_N_examples():
    psi = psi_half(3)
    assert count_N(0, 3, psi) == 1
    assert count_N(F(1, 2), 1, psi) == 0
    assert count_N(F(1, 3), 3, psi_const(3, 0)) == 0


def test_psi_mass_examples():
    assert psi_mass(10, psi_prime(10)) == 2 * (F(1, 4) + F(2, 9) + F(4, 25) + F(6, 49))
    assert psi_mass(1, psi_half(1)) == 1
    assert psi_mass(7, psi_const(7, 0)) == 0


def test_dyadic_cutoffs():
    assert dyadic_cutoffs(psi_half(10), 1).values == (0, 0)
    # Psi(2) = 1/2, Psi(3) = 17/18, Psi(5) = 17/18 + 8/25 >= 1
    assert dyadic_cutoffs(psi_prime(100), 1).values == (0, 4)
    assert dyadic_cutoffs(psi_prime(5), 3).truncated


def test_variance_examples():
    assert variance_exact(1, psi_half(1)).variance == 0
    assert variance_exact(6, psi_const(6, 0)).variance == 0
    psi = psi_prime(4)
    A2, A3 = build_A(2, psi), build_A(3, psi)
    Psi = psi_mass(4, psi)
    assert variance_exact(4, psi).variance == A2.measure + A3.measure + 2 * intersect_measure(A2, A3) - Psi**2


def test_variance_matches_midpoint_oracle():
    for psi in (psi_half(8), psi_prime(12), psi_random(9, F(3, 4), 1, 5)):
        Q = psi.Qmax
        assert variance_exact(Q, psi).variance == oracles.variance(Q, psi)


@pytest.mark.parametrize("Q", [1, 17, 60])
def test_sweep_and_pairs_agree(Q):
    for psi in (psi_half(Q), psi_random(Q, F(1, 2), 1, 3)):
        assert square_integral(Q, psi, "sweep") == square_integral(Q, psi, "pairs")


def test_variance_guards():
    psi = psi_half(50)
    with pytest.raises(ResourceLimitError):
        variance_exact(50, psi, max_pairs=100)
    with pytest.raises(ResourceLimitError):
        variance_exact(50, psi, max_events=10)
    with pytest.raises(DomainError):
        variance_exact(51, psi)


def test_montecarlo_examples():
    rep = variance_montecarlo(1, psi_half(1), 10**4, 42)
    assert abs(rep.variance) <= 3 * rep.stderr + 1e-12
    zero = variance_montecarlo(5, psi_const(5, 0), 1000, 1)
    assert zero.variance == 0 and zero.stderr == 0


def test_montecarlo_within_three_errors():
    Q = 1000
    psi = psi_prime(Q)
    exact = float(variance_exact(Q, psi).variance)
    rep = variance_montecarlo(Q, psi, 10**5, 1)
    assert abs(rep.variance - exact) <= 3 * rep.stderr


def test_montecarlo_ignores_workers():
    psi = psi_half(30)
    a = variance_montecarlo(30, psi, 5000, 9, workers=1)
    b = variance_montecarlo(30, psi, 5000, 9, workers=2)
    assert a == b


def test_random_family_reproducible():
    # two draws per q: keep iff the first is below density * 2^64,
    # value min(1/2, scale * (second >> 54) / 1024)
    psi = psi_random(8, F(1, 2), 1, 1)
    assert psi_random(8, F(1, 2), 1, 1).values == psi.values
    assert all(0 < v <= F(1, 2) and (v * 1024).denominator == 1 for v in psi.values.values())
    assert psi_random(200, 0, 1, 3).support() == []
    for density, scale, seed in RANDOM_FAMILIES:
        got = psi_random(200, density, scale, seed)
        want = oracles.random_family(200, density, scale, seed)
        assert {q: got(q) for q in range(1, 201)} == want


def test_parse_family(tmp_path):
    assert parse_family("half", 5).values == psi_half(5).values
    assert parse_family("const:1/3", 4)(4) == F(1, 3)
    assert parse_family("random:1/2,1,1", 10).values == psi_random(10, F(1, 2), 1, 1).values
    path = tmp_path / "psi.txt"
    path.write_text("# q psi\n2 1/4\n5 1/2\n")
    psi = psi_from_file(path)
    assert psi(2) == F(1, 4) and psi(3) == 0 and psi(5) == F(1, 2)
    assert parse_family(f"file:{path}", 5)(5) == F(1, 2)
    for bad in ("nope", "const:3/4", "random:1/2,1", "const:x"):
        with pytest.raises(ConfigError):
            parse_family(bad, 5)


def test_domain_rejects_out_of_range():
    with pytest.raises(DomainError):
        ApproxFunction(3, {1: F(3, 5)})
    with pytest.raises(DomainError):
        psi_half(3)(4)


def test_measure_formula_all_q():
    fams = [psi_half(300), psi_prime(300)] + [psi_random(300, *a) for a in RANDOM_FAMILIES]
    for psi in fams:
        for q in range(1, 301):
            assert build_A(q, psi).measure == 2 * euler_phi(q) * psi(q) / q


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 300), st.integers(1, 300), st.integers(0, 2**32))
def test_intersection_properties(q, r, seed):
    assume(q != r)
    psi = psi_random(300, F(3, 4), 1, seed)
    A, B = build_A(q, psi), build_A(r, psi)
    m = intersect_measure(A, B)
    assert m == intersect_measure(B, A)
    assert m <= min(A.measure, B.measure)
    if D_value(q, r, psi) < F(1, 2):
        assert m == 0


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(1, 40), st.integers(0, 2**32))
def test_intersection_matches_pairwise(q, r, seed):
    psi = psi_random(40, F(1), 1, seed)
    assert intersect_measure(build_A(q, psi), build_A(r, psi)) == oracles.overlap(q, r, psi)


@settings(max_examples=60, deadline=None)
@given(st.fractions(0, 1, max_denominator=500), st.integers(1, 25), st.integers(0, 2**32))
def test_count_N_matches_enumeration(alpha, Q, seed):
    psi = psi_random(25, F(3, 4), 1, seed)
    assert count_N(alpha, Q, psi) == oracles.count_N(alpha, Q, psi)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(0, 2**32))
def test_variance_nonnegative(Q, seed):
    psi = psi_random(40, F(1, 2), F(1, 2), seed)
    assert variance_exact(Q, psi).variance >= 0


def test_intervals_are_disjoint_and_sorted():
    psi = psi_half(60)
    for q in range(1, 61):
        iv = build_A(q, psi).intervals
        assert all(a < b for a, b in iv)
        assert all(iv[i][1] <= iv[i + 1][0] for i in range(len(iv) - 1))
        assert oracles.total_length(oracles.intervals(q, psi(q))) == build_A(q, psi).measure
        assert math.isclose(float(build_A(q, psi).measure), 2 * euler_phi(q) * 0.5 / q)
