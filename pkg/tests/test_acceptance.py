"""Acceptance suite: one test per criterion, summarised at the end of the run."""

from fractions import Fraction

from quantds.anatomy import count_large_L, count_many_small_primes, large_L_grid, small_primes_grid
from quantds.approx import build_A, intersect_measure, psi_const, psi_half, psi_prime, psi_random
from quantds.bilinear import (
    bilinear_sum_D,
    bilinear_sum_L,
    bilinear_sum_omega,
    optimality_gap,
    variance_bound_check,
    weight,
)
from quantds.cli import run
from quantds.gcdgraph import run_suite
from quantds.numthy import D_value
from quantds.overlap import OverlapWeight, calibrate_table, closed_form_overlap, pair_table, weight_sum

F = Fraction
HALF = F(1, 2)


def _record(record_property, **values):
    for k, v in values.items():
        record_property(k, v)


# 1 ------------------------------------------------------------------------------------------

def test_criterion_01_overlap_identity(record_property):
    Q = 150
    checked = 0
    for psi in (psi_half(Q), psi_random(Q, HALF, 1, 1), psi_random(Q, F(3, 4), 1, 2)):
        sets = {q: build_A(q, psi) for q in range(1, Q + 1)}
        for q in range(1, Q + 1):
            for r in range(q + 1, Q + 1):
                assert closed_form_overlap(q, r, psi) == intersect_measure(sets[q], sets[r]), (psi.name, q, r)
                checked += 1
    _record(record_property, pairs=checked)


# 2 ------------------------------------------------------------------------------------------

def test_criterion_02_empty_overlap(record_property):
    Q = 300
    checked = 0
    families = (psi_half(Q), psi_prime(Q), psi_const(Q, F(1, 100)), psi_random(Q, HALF, F(1, 4), 1))
    for psi in families:
        sets = {q: build_A(q, psi) for q in range(1, Q + 1)}
        for q in range(1, Q + 1):
            for r in range(q + 1, Q + 1):
                if D_value(q, r, psi) < HALF:
                    assert intersect_measure(sets[q], sets[r]) == 0, (psi.name, q, r)
                    checked += 1
    assert checked > 0
    _record(record_property, pairs=checked)


# 3 ------------------------------------------------------------------------------------------

BOUNDS = [("generic", 1), ("generic", 10), ("generic", 100), ("pv", 1)]


def _fitted(Q):
    """Largest fitted K per bound over the families, plus the worst violation count."""
    Ks, bad = {}, 0
    for psi in (psi_half(Q), psi_random(Q, HALF, 1, 1)):
        table = pair_table([(q, r) for q in range(1, Q + 1) for r in range(q + 1, Q + 1)], psi)
        for kind, t in BOUNDS:
            cal = calibrate_table(table, kind, t)
            Ks[(kind, t)] = max(Ks.get((kind, t), 0.0), cal.K)
            bad += cal.violations
    return Ks, bad


def test_criterion_03_bound_calibration(record_property):
    K300, bad300 = _fitted(300)
    K600, bad600 = _fitted(600)
    assert bad300 == 0 and bad600 == 0
    for key in K300:
        assert K600[key] <= 2 * K300[key] + 1e-12, (key, K300[key], K600[key])
    _record(record_property, **{f"K_{k}_{t}": round(K600[(k, t)], 6) for k, t in BOUNDS})


# 4 ------------------------------------------------------------------------------------------

def test_criterion_04_optimality(record_property):
    grid = (10**2, 10**3, 10**4)
    gaps = [optimality_gap(Q) for Q in grid]
    assert all(abs(g) <= 5 for g in gaps)
    steps = [abs(b - a) for a, b in zip(gaps, gaps[1:])]
    assert all(b <= a for a, b in zip(steps, steps[1:])), steps
    _record(record_property, **{f"gap_{Q}": round(float(g), 6) for Q, g in zip(grid, gaps)})


# 5 ------------------------------------------------------------------------------------------

def test_criterion_05_variance_shape(record_property):
    families = {"half": psi_half, "prime": psi_prime, "random": lambda Q: psi_random(Q, HALF, 1, 1)}
    ratios = {}
    for name, mk in families.items():
        for Q in (10**2, 10**3):
            ratios[(name, Q)] = variance_bound_check(Q, mk(Q), HALF).ratio
    C = max(ratios.values())
    assert C < 1
    for name in families:
        small, large = abs(ratios[(name, 100)]), abs(ratios[(name, 1000)])
        assert large <= 2 * small + 0.01, (name, small, large)
    _record(record_property, C=round(C, 6))


# 6 ------------------------------------------------------------------------------------------

def test_criterion_06_weight_sum():
    deltas = [F(1, 10), F(1, 3), HALF, F(7, 5), F(3)]
    widths = [F(0), F(1, 7), F(2, 3), F(5, 2), F(9)]
    rhos = [F(1, 50), F(1, 9), HALF, F(3, 2)]
    n = 0
    for d in deltas:
        for w in widths:
            for rho in rhos:
                D = d + w
                s = weight_sum(OverlapWeight(d, D), rho)
                assert abs(s - 2 * d * D / rho) <= 2 * d, (d, D, rho)
                n += 1
    assert n == 100


# 7 ------------------------------------------------------------------------------------------

def test_criterion_07_anatomy(record_property):
    assert count_large_L(100, 1, 1) == 3
    assert count_many_small_primes(30, 10, threshold=2) == 11
    xs = (10**4, 10**5, 10**6)
    large = {x: max(r.ratio for r in large_L_grid([x], [1, 2, 5, 10], [1, 2, 3])) for x in xs}
    small = {x: max(r.ratio for r in small_primes_grid([x], [10, 100], [HALF, 1, 2], C=2)) for x in xs}
    for fits in (large, small):
        vals = list(fits.values())
        assert min(vals) > 0 and max(vals) <= 2 * min(vals), fits
    _record(record_property, C_large_L=round(max(large.values()), 6), C_small_primes=round(max(small.values()), 6))


# 8 ------------------------------------------------------------------------------------------

SUITE_COUNTS = {"ratio": 1000, "witness": 1000, "refine": 200, "pigeonhole": 100, "reduce": 100}


def test_criterion_08_gcd_graph_suite(record_property):
    sizes = []
    for suite, count in SUITE_COUNTS.items():
        rows = run_suite(suite, count, seed=1)
        assert len(rows) == count
        failed = [r for r in rows if not r.ok]
        assert not failed, (suite, failed[:3])
        if suite == "reduce":
            sizes = [int(r.size.split("x")[0]) for r in rows]
    assert max(sizes) == 50
    _record(record_property, **{k: v for k, v in SUITE_COUNTS.items()})


# 9 ------------------------------------------------------------------------------------------

def test_criterion_09_bilinear_consistency():
    assert bilinear_sum_D(3, psi_half(3), F(3, 2)) == F(169, 144)
    for psi in (psi_half(100), psi_random(100, HALF, 1, 1)):
        prev = None
        for Q in range(1, 101):
            ys = sorted({HALF, F(3), F(Q)})
            vals = []
            for y in ys:
                D = bilinear_sum_D(Q, psi, y)
                assert bilinear_sum_omega(Q, psi, y, 2, threshold=0) == D
                # L vanishes only on the diagonal q = r
                diag = sum((weight(q, psi) ** 2 for q in psi.support(Q) if D_value(q, q, psi) <= y), F(0))
                assert bilinear_sum_L(Q, psi, y, 1, 10**12) == D - diag
                vals.append(D)
            assert vals == sorted(vals)
            cur = bilinear_sum_D(Q, psi, 3)
            assert prev is None or cur >= prev
            prev = cur
        ladder = [bilinear_sum_D(100, psi, F(k, 4)) for k in range(1, 41)]
        assert ladder == sorted(ladder)


# 10 -----------------------------------------------------------------------------------------

ARTIFACTS = [
    ["overlap-verify", "--Q", "40", "--psi", "random:1/2,1,7"],
    ["variance", "--Q", "60", "--psi", "half", "--mode", "mc", "--samples", "4000", "--seed", "3"],
    ["variance", "--Q", "40", "--psi", "prime"],
    ["bilinear", "--Qgrid", "20,40", "--y", "1,3", "--t", "2", "--s", "1"],
    ["graph", "verify", "--count", "20", "--seed", "5"],
    ["graph", "run", "--seed", "9", "--size", "10"],
]


def _artifact(argv, path, jobs):
    code = run(argv + ["--jobs", str(jobs), "--out", str(path)])
    assert code == 0, argv
    return path.read_bytes()


def test_criterion_10_determinism(tmp_path):
    for i, argv in enumerate(ARTIFACTS):
        outs = [_artifact(argv, tmp_path / f"{i}_{n}_{jobs}.csv", jobs) for n, jobs in enumerate((1, 1, 2))]
        assert outs[0] == outs[1] == outs[2], argv
    rows = [run_suite("reduce", 12, seed=4, workers=w) for w in (1, 2)]
    assert rows[0] == rows[1]
