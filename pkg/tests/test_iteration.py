import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantds.approx import psi_half
from quantds.errors import DomainError, LemmaViolation, ResourceLimitError
from quantds.gcdgraph import (
    IterationTrace,
    R_set,
    bilinear_graph,
    cosmetic_prune_L,
    cosmetic_prune_omega,
    degree_violations,
    iteration_step1,
    iteration_step2,
    main_dichotomy,
    new_graph,
    r_split,
    random_graph,
    reduce_to_empty_R,
    small_primes_pipeline,
    toy_profile,
    violations,
)

F = Fraction
BIG = 100003  # first prime above the toy C6


# main dichotomy ------------------------------------------------------------------------

def test_dichotomy_branch_A():
    p = 101
    G = new_graph(1, {p, p * p}, {p, p * p}, {(p, p * p)})
    res = main_dichotomy(G, p, toy_profile(C2=10))
    assert (res.branch, res.k, res.l) == ("A", 1, 2)
    assert res.log_ratio == pytest.approx(6.0418, abs=1e-4)
    assert res.log_ratio >= math.log(2)
    assert violations(res.graph) == [] and p in res.graph.P


def test_dichotomy_branch_B():
    G = new_graph(1, {13}, {13}, {(13, 13)})
    res = main_dichotomy(G, 13, toy_profile(C2=10))
    assert (res.branch, res.k, res.l) == ("B", 1, 1)


def test_dichotomy_guards():
    G = new_graph(1, {13}, {13}, {(13, 13)})
    with pytest.raises(DomainError):
        main_dichotomy(G, 13, toy_profile())  # 13 <= C2
    with pytest.raises(DomainError):
        main_dichotomy(G, 17, toy_profile(C2=10))  # 17 is not in R
    Z = new_graph({13: 1, 26: 0}, {13}, {26}, set())
    with pytest.raises(DomainError):
        main_dichotomy(Z, 13, toy_profile(C2=10))


# small primes ----------------------------------------------------------------------------

def test_small_primes_pipeline_examples():
    prof = toy_profile()
    G = new_graph(1, {6, 10}, {6, 15}, {(6, 6), (10, 15), (6, 15)})
    H, trace = small_primes_pipeline(G, prof)
    assert R_set(H) == frozenset()
    assert {2, 3, 5} >= H.P and H.P
    assert trace.findings == []
    for stp in trace.steps:
        assert stp.ok and stp.log_q_after >= stp.log_q_before - math.log(float(prof.C5)) - 1e-9
    assert violations(H) == []
    # nothing to do
    K = new_graph(1, {1}, {1}, {(1, 1)})
    H, trace = small_primes_pipeline(K, prof)
    assert H == K and trace.steps == []


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**63), st.integers(2, 14))
def test_small_primes_pipeline_property(seed, n):
    prof = toy_profile()
    G = random_graph(seed, n, n)
    H, trace = small_primes_pipeline(G, prof)
    assert not any(prof.below_C6(p) for p in R_set(H))
    assert H.EI > 0 and violations(H) == []
    assert trace.findings == []


# steps 1 and 2 ------------------------------------------------------------------------------

def test_step1_flat_prime():
    p = BIG
    G = new_graph(1, {p, p * p}, {p, p * p}, {(p, p * p)})
    prof = toy_profile()
    assert r_split(G, prof).R_flat == {p}
    trace = IterationTrace()
    H = iteration_step1(G, prof, trace)
    assert p in H.P and R_set(H) == frozenset()
    assert (H.f[p], H.g[p]) == (1, 2)
    st_ = trace.steps[0]
    assert st_.ok and st_.guarantee == pytest.approx(math.log(2))
    assert st_.log_q_after >= st_.log_q_before + math.log(2)


def test_step2_sharp_prime():
    p = BIG
    G = new_graph(1, {p}, {p}, {(p, p)})
    prof = toy_profile()
    assert r_split(G, prof).R_sharp == {p}
    trace = IterationTrace()
    H = iteration_step2(G, prof, trace)
    assert p in H.P and R_set(H) == frozenset() and H.f[p] == H.g[p] == 1
    assert trace.steps[0].ok and trace.findings == []
    with pytest.raises(DomainError):
        iteration_step1(G, prof)  # no flat prime


def test_steps_need_nonempty_large_R():
    prof = toy_profile()
    G = new_graph(1, {2}, {3}, {(2, 3)})
    for step in (iteration_step1, iteration_step2):
        with pytest.raises(DomainError):
            step(G, prof)
    S = new_graph(1, {6}, {6}, {(6, 6)})
    for step in (iteration_step1, iteration_step2):
        with pytest.raises(DomainError):
            step(S, prof)  # small primes must be absorbed first


# cosmetic pruning -------------------------------------------------------------------------------

TINY = dict(C2=F(1, 2), C4_cap=1, C6=2)
PRIMORIAL = 3 * 5 * 7 * 11 * 13 * 17 * 19 * 23 * 29


def test_prune_L_keeps_edges_when_R_is_empty():
    prof = toy_profile(**TINY)
    G = new_graph(1, {PRIMORIAL}, {1}, {(PRIMORIAL, 1)})
    res = cosmetic_prune_L(G, 2, 1, prof)
    assert res.graph == G and res.removed_mass_ratio == 0
    assert res.quality_ok and res.edges_ok
    with pytest.raises(DomainError):
        cosmetic_prune_L(G, 1, 1, prof)  # t < C6 s
    with pytest.raises(DomainError):
        cosmetic_prune_L(G, 30, 1, prof)  # no prime above 30 on the edge


def test_prune_omega_example():
    prof = toy_profile(**TINY, omega_c=1)
    G = new_graph(1, {30}, {1}, {(30, 1)})
    res = cosmetic_prune_omega(G, 16, 3, prof)
    assert res.graph == G and res.quality_ok and res.edges_ok
    with pytest.raises(DomainError):
        cosmetic_prune_omega(G, 15, 3, prof)  # t < e^e
    with pytest.raises(DomainError):
        cosmetic_prune_omega(G, 16, 1, prof)  # U < 2 log log t
    with pytest.raises(DomainError):
        cosmetic_prune_omega(G, 16, 4, prof)  # omega_t(30) = 3 < U


def test_prune_needs_empty_flat_set():
    prof = toy_profile(**TINY)
    p = BIG
    G = new_graph(1, {p, p * p}, {p, p * p}, {(p, p * p)})
    assert r_split(G, prof).R_flat
    with pytest.raises(DomainError):
        cosmetic_prune_L(G, 2, 1, prof, check_maximal=False)


# full reduction -----------------------------------------------------------------------------------

def test_reduce_identity_when_R_empty():
    G = new_graph(1, {2, 3}, {5, 7}, {(2, 5), (3, 7)})
    res = reduce_to_empty_R(G, toy_profile())
    assert res.graph == G and res.trace.steps == []
    assert (res.a, res.b) == (1, 1) and res.gcd_ok and res.bound_ok


def test_reduce_random_graph():
    prof = toy_profile()
    G = random_graph(20, 20, 20)
    assert len(R_set(G)) == 7
    res = reduce_to_empty_R(G, prof)
    assert R_set(res.graph) == frozenset()
    assert res.gcd_ok and res.bound_ok and res.trace.findings == []
    assert [s.R_after for s in res.trace.steps[:-1]][-1] == 0
    assert res.trace.steps[-1].rule == "HighDegree"
    assert degree_violations(res.graph) == []
    assert res.log_q_final >= res.log_q_initial + res.trace.composite_guarantee() - 1e-9


@pytest.mark.parametrize("y,ab", [(1, (1, 2)), (2, (3, 2)), (5, (5, 6))])
def test_reduce_bilinear_graph(y, ab):
    G = bilinear_graph(50, psi_half(50), y)
    res = reduce_to_empty_R(G, toy_profile())
    assert (res.a, res.b) == ab
    assert res.gcd_ok and res.bound_ok and res.trace.findings == []
    d = math.gcd(*ab)
    assert all(math.gcd(v, w) == d for v, w in res.graph.E)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**63), st.integers(2, 16))
def test_reduce_property(seed, n):
    res = reduce_to_empty_R(random_graph(seed, n, n), toy_profile(), strict=True)
    assert R_set(res.graph) == frozenset() and res.gcd_ok and res.bound_ok
    assert violations(res.graph) == []


def test_reduce_step_cap():
    p = BIG
    G = new_graph(1, {p, p * p}, {p, p * p}, {(p, p * p)})
    assert reduce_to_empty_R(G, toy_profile(), max_steps=1).gcd_ok
    q = 100019
    H = new_graph(1, {p * q}, {p * q}, {(p * q, p * q)})
    with pytest.raises(ResourceLimitError):
        reduce_to_empty_R(H, toy_profile(), max_steps=0)


def test_strict_mode_raises_on_findings():
    trace = IterationTrace(strict=True)
    with pytest.raises(LemmaViolation):
        trace.finding("forced")
