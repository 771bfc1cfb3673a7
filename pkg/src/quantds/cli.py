"""Command-line drivers: every experiment writes one CSV or JSON table.

Exit codes: 0 when every asserted invariant holds, 1 on an invariant
violation (a report file is written), 2 on a configuration error, 3 when a
resource guard trips.

CSV tables end with a comment line ``# key=value ...`` carrying the
profile, tau, seed and package version plus any fitted constants.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction

from . import __version__
from .anatomy import GridRow, count_many_small_primes, large_L_grid, small_primes_grid
from .approx import (
    DEFAULT_MAX_EVENTS,
    DEFAULT_MAX_PAIRS,
    build_A,
    fmt_rational,
    intersect_measure,
    parse_family,
    parse_rational,
    variance_exact,
    variance_montecarlo,
)
from .bilinear import bilinear_report
from .errors import ConfigError, DomainError, InvariantViolation, ResourceLimitError
from .numthy import D_value
from .overlap import calibrate_table, classify_pair, closed_form_overlap, pair_table

DEFAULT_TAU = Fraction(1, 128)
EXIT_OK, EXIT_INVARIANT, EXIT_CONFIG, EXIT_RESOURCE = 0, 1, 2, 3


# formatting --------------------------------------------------------------------

def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, Fraction):
        return fmt_rational(x)
    if isinstance(x, float):
        return repr(x)
    return str(x)


def render(columns, rows, meta: dict, fmt: str) -> str:
    rows = [[_cell(v) for v in row] for row in rows]
    meta = {k: _cell(v) for k, v in meta.items()}
    if fmt == "json":
        body = {"columns": list(columns), "rows": [dict(zip(columns, r)) for r in rows], "meta": meta}
        return json.dumps(body, indent=2, sort_keys=True) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    buf.write("# " + " ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
    return buf.getvalue()


def _list(kind):
    def parse(text):
        try:
            return [kind(x) for x in text.split(",") if x.strip()]
        except (ValueError, ConfigError) as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def _rational(text):
    try:
        return parse_rational(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


ints = _list(int)
rationals = _list(parse_rational)


# subcommands -------------------------------------------------------------------
# each returns (columns, rows, extra_meta, failures)

def _identity_chunk(args):
    pairs, psi = args
    cache = {}

    def A(q):
        if q not in cache:
            cache[q] = build_A(q, psi)
        return cache[q]

    return [(q, r) for q, r in pairs if closed_form_overlap(q, r, psi) != intersect_measure(A(q), A(r))]


def _read_pairs(path):
    out = []
    try:
        with open(path) as fh:
            for n, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if line:
                    q, r = line.replace(",", " ").split()
                    out.append((int(q), int(r)))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read pairs from {path}: {exc}") from exc
    return out


def cmd_overlap_verify(a):
    psi = parse_family(a.psi, a.Q)
    if a.pairs:
        pairs = sorted({(min(q, r), max(q, r)) for q, r in _read_pairs(a.pairs) if q != r})
        for q, r in pairs:
            if not (1 <= q and r <= a.Q):
                raise ConfigError(f"pair ({q}, {r}) lies outside [1, {a.Q}]")
    else:
        pairs = [(q, r) for q in range(1, a.Q + 1) for r in range(q + 1, a.Q + 1)]
    chunks = [(pairs[i::16], psi) for i in range(16)]
    if a.jobs > 1:
        with ProcessPoolExecutor(max_workers=a.jobs) as pool:
            bad = sorted(x for part in pool.map(_identity_chunk, chunks) for x in part)
    else:
        bad = sorted(x for c in chunks for x in _identity_chunk(c))
    cal = calibrate_table(pair_table(pairs, psi, a.jobs), a.kind, a.t)
    rows = [(x.q, x.r, x.D, x.exact, x.bound, x.ratio) for x in cal.rows]
    meta = {"psi": a.psi, "Q": a.Q, "kind": a.kind, "t": cal.t, "K": cal.K,
            "worst": "" if cal.worst is None else f"{cal.worst[0]}:{cal.worst[1]}",
            "identity_checked": len(pairs), "identity_mismatches": len(bad)}
    fails = [f"closed form differs from the interval measure at (q, r) = {q, r}" for q, r in bad]
    if cal.violations:
        fails.append(f"{cal.violations} rows exceed the bound with the fitted K")
    return ["q", "r", "D", "exact", "bound", "ratio"], rows, meta, fails


def cmd_variance(a):
    psi = parse_family(a.psi, a.Q)
    if a.mode == "exact":
        rep = variance_exact(a.Q, psi, a.method, a.jobs, a.max_pairs, a.max_events)
    else:
        rep = variance_montecarlo(a.Q, psi, a.samples, a.seed, a.partitions, a.jobs)
    rows = [(rep.Q, rep.Psi, rep.variance, rep.mode, rep.stderr, rep.samples)]
    return ["Q", "Psi", "variance", "mode", "stderr", "samples"], rows, {"psi": a.psi}, []


def cmd_optimality(a):
    rows, fails = [], []
    for Q in a.Qgrid:
        psi = parse_family(a.psi, Q)
        rep = variance_exact(Q, psi, workers=a.jobs, max_pairs=a.max_pairs, max_events=a.max_events)
        gap = rep.variance - rep.Psi
        rows.append((Q, rep.Psi, rep.variance, gap, float(gap)))
        if abs(gap) > a.max_gap:
            fails.append(f"|gap| = {float(abs(gap)):.6g} exceeds {a.max_gap} at Q={Q}")
    return ["Q", "Psi", "variance", "gap", "gap_float"], rows, {"psi": a.psi, "max_gap": a.max_gap}, fails


def cmd_bilinear(a):
    rows, fails = [], []
    for Q in a.Qgrid:
        psi = parse_family(a.psi, Q)
        prev = None
        for y in sorted(a.y):
            base = bilinear_report(Q, psi, y, a.eps)
            rows.append((Q, y, None, None, None, base.lhs, base.rhs_shape, base.fitted_constant))
            if prev is not None and base.lhs < prev:
                fails.append(f"D-sum decreased in y at Q={Q}, y={fmt_rational(y)}")
            prev = base.lhs
            for t in a.t:
                for s in a.s:
                    r = bilinear_report(Q, psi, y, a.eps, t=t, s=s, C=a.C)
                    rows.append((Q, y, t, s, None, r.lhs, r.rhs_shape, r.fitted_constant))
                    if r.lhs > base.lhs:
                        fails.append(f"L-restricted sum exceeds the D-sum at Q={Q} y={y} t={t} s={s}")
                for kappa in a.kappa:
                    r = bilinear_report(Q, psi, y, a.eps, t=t, kappa=kappa, C=a.C)
                    rows.append((Q, y, t, None, kappa, r.lhs, r.rhs_shape, r.fitted_constant))
                    if r.lhs > base.lhs:
                        fails.append(f"omega-restricted sum exceeds the D-sum at Q={Q} y={y} t={t} kappa={kappa}")
    cols = ["Q", "y", "t", "s", "kappa", "lhs", "envelope", "fitted_constant"]
    fitted = max((r[-1] for r in rows), default=0.0)
    return cols, rows, {"psi": a.psi, "eps": a.eps, "C_fit": fitted}, fails


def _threshold_row(x, t, m, C):
    c = count_many_small_primes(x, t, threshold=m)
    b = x * float(t) ** (-C)
    return GridRow(x, t, m, c, b, c / b)


def cmd_anatomy(a):
    if a.kind == "large-L":
        grid = large_L_grid(a.x, a.t, a.s)
        param = "s"
    elif a.threshold:
        grid = [_threshold_row(x, t, m, a.C) for x in a.x for t in a.t for m in a.threshold]
        param = "threshold"
    else:
        grid = small_primes_grid(a.x, a.t, a.kappa, a.C)
        param = "kappa"
    rows = [(g.x, g.t, g.param, g.count, g.bound, g.ratio) for g in grid]
    fitted = max((g.ratio for g in grid), default=0.0)
    return ["x", "t", param, "count", "bound", "ratio"], rows, {"kind": a.kind, "C_fit": fitted}, []


def cmd_classify(a):
    psi = parse_family(a.psi, a.Q)
    tally = {}
    rows = []
    for q in range(1, a.Q + 1):
        for r in range(q + 1, a.Q + 1):
            tag = classify_pair(q, r, psi, a.eps)
            tally[tag] = tally.get(tag, 0) + 1
            if not a.summary:
                rows.append((q, r, D_value(q, r, psi), tag))
    meta = {"psi": a.psi, "eps": a.eps}
    if a.summary:
        return ["class", "count"], sorted(tally.items()), meta, []
    return ["q", "r", "D", "class"], rows, meta, []


def _profile(a):
    from .gcdgraph import make_profile

    over = {}
    for item in a.set or ():
        key, _, val = item.partition("=")
        if not val:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        over[key.strip()] = parse_rational(val)
    if a.M is not None:
        over["M"] = a.M
    try:
        return make_profile(a.profile, tau=a.tau or DEFAULT_TAU, **over)
    except TypeError as exc:
        raise ConfigError(f"bad profile override: {exc}") from exc


def cmd_graph_verify(a):
    from .gcdgraph import SUITES, run_suite

    counts = {"ratio": 1000, "witness": 1000, "refine": 200, "pigeonhole": 100, "reduce": 100}
    suites = SUITES if a.suite == "all" else (a.suite,)
    rows = []
    for s in suites:
        rows += run_suite(s, a.count if a.count is not None else counts[s], a.seed, a.jobs)
    out = [(r.suite, r.instance, r.seed, r.size, r.ok, r.detail) for r in rows]
    fails = [f"{r.suite} instance {r.instance} (seed {r.seed}): {r.detail}" for r in rows if not r.ok]
    meta = {"suites": ",".join(suites), "instances": len(rows), "failed": len(fails)}
    return ["suite", "instance", "seed", "size", "ok", "detail"], out, meta, fails


def cmd_graph_run(a):
    from .gcdgraph import R_set, from_text, random_graph, reduce_to_empty_R, to_text

    if a.graph:
        try:
            with open(a.graph) as fh:
                G = from_text(fh.read())
        except OSError as exc:
            raise ConfigError(f"cannot read {a.graph}: {exc}") from exc
        if a.tau is None:
            a.tau = G.tau
        elif a.tau != G.tau:
            raise ConfigError(f"--tau {fmt_rational(a.tau)} differs from the graph's tau {fmt_rational(G.tau)}")
        profile = _profile(a)
    else:
        profile = _profile(a)
        G = random_graph(a.seed, a.size, a.size, tau=profile.tau)
    res = reduce_to_empty_R(G, profile, max_steps=a.max_steps)
    if a.graph_out:
        with open(a.graph_out, "w") as fh:
            fh.write(to_text(res.graph))
    rows = [(s.step, s.rule, s.log_q_before, s.log_q_after, s.R_before, s.R_after,
             " ".join(map(str, s.primes_added)), s.guarantee, s.ok) for s in res.trace.steps]
    meta = {"a": res.a, "b": res.b, "gcd_ok": res.gcd_ok, "bound_ok": res.bound_ok,
            "log_q_initial": res.log_q_initial, "log_q_final": res.log_q_final,
            "findings": len(res.trace.findings)}
    fails = list(res.trace.findings)
    if R_set(res.graph):
        fails.append("R(G) is not empty at the end")
    if fails:
        fails.append("final graph:")
        fails += to_text(res.graph).splitlines()
    cols = ["step", "rule", "log_q_before", "log_q_after", "R_before", "R_after", "primes", "guarantee", "ok"]
    return cols, rows, meta, fails


# parser ------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--report", help="where to write the violation report (default: OUT.report.txt)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes; never changes the output")
    common.add_argument("--seed", type=int, default=1)
    common.add_argument("--profile", choices=("toy", "paper"), default="toy")
    common.add_argument("--tau", type=_rational, default=None, help="default 1/128, or the tau of --graph")
    common.add_argument("--M", type=_rational, default=None)
    common.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="toy profile override, e.g. C2=320 (repeatable)")

    p = argparse.ArgumentParser(prog="quantds", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("overlap-verify", parents=[common], help="closed form vs interval measure, bound calibration")
    s.add_argument("--Q", type=int, required=True)
    s.add_argument("--psi", default="half")
    s.add_argument("--kind", choices=("generic", "pv"), default="generic")
    s.add_argument("--t", type=_rational, default=Fraction(1))
    s.add_argument("--pairs", help="file of 'q r' lines; pairs with q == r are skipped")
    s.set_defaults(run=cmd_overlap_verify)

    s = sub.add_parser("variance", parents=[common], help="variance of N(alpha; Q)")
    s.add_argument("--Q", type=int, required=True)
    s.add_argument("--psi", default="half")
    s.add_argument("--mode", choices=("exact", "mc"), default="exact")
    s.add_argument("--method", choices=("sweep", "pairs"), default="sweep")
    s.add_argument("--samples", type=int, default=100_000)
    s.add_argument("--partitions", type=int, default=4)
    s.add_argument("--max-pairs", type=int, default=DEFAULT_MAX_PAIRS)
    s.add_argument("--max-events", type=int, default=DEFAULT_MAX_EVENTS)
    s.set_defaults(run=cmd_variance)

    s = sub.add_parser("optimality", parents=[common], help="Var - Psi over a grid of Q")
    s.add_argument("--Qgrid", type=ints, required=True)
    s.add_argument("--psi", default="prime")
    s.add_argument("--max-gap", type=float, default=5.0)
    s.add_argument("--max-pairs", type=int, default=DEFAULT_MAX_PAIRS)
    s.add_argument("--max-events", type=int, default=DEFAULT_MAX_EVENTS)
    s.set_defaults(run=cmd_optimality)

    s = sub.add_parser("bilinear", parents=[common], help="bilinear sums against their envelopes")
    s.add_argument("--Qgrid", type=ints, required=True)
    s.add_argument("--psi", default="half")
    s.add_argument("--y", type=rationals, required=True)
    s.add_argument("--t", type=rationals, default=[])
    s.add_argument("--s", type=rationals, default=[])
    s.add_argument("--kappa", type=rationals, default=[])
    s.add_argument("--eps", type=_rational, default=Fraction(1, 2))
    s.add_argument("--C", type=float, default=1.0)
    s.set_defaults(run=cmd_bilinear)

    s = sub.add_parser("anatomy", parents=[common], help="counts of integers with large L or many small primes")
    s.add_argument("--kind", choices=("large-L", "small-primes"), default="large-L")
    s.add_argument("--x", type=ints, required=True)
    s.add_argument("--t", type=rationals, required=True)
    s.add_argument("--s", type=rationals, default=[Fraction(1)])
    s.add_argument("--kappa", type=rationals, default=[Fraction(1)])
    s.add_argument("--threshold", type=rationals, default=[],
                   help="explicit cuts replacing kappa log t (small-primes only)")
    s.add_argument("--C", type=int, default=2)
    s.set_defaults(run=cmd_anatomy)

    s = sub.add_parser("classify", parents=[common], help="pair classes E1/E2/E3")
    s.add_argument("--Q", type=int, required=True)
    s.add_argument("--psi", default="half")
    s.add_argument("--eps", type=_rational, default=Fraction(1, 2))
    s.add_argument("--summary", action="store_true", help="emit class counts only")
    s.set_defaults(run=cmd_classify)

    g = sub.add_parser("graph", help="GCD-graph suites and runs")
    gsub = g.add_subparsers(dest="graph_command", required=True)
    s = gsub.add_parser("verify", parents=[common], help="seeded property suites")
    s.add_argument("--suite", choices=("all", "ratio", "witness", "refine", "pigeonhole", "reduce"), default="all")
    s.add_argument("--count", type=int, default=None, help="instances per suite")
    s.set_defaults(run=cmd_graph_verify)
    s = gsub.add_parser("run", parents=[common], help="reduce a graph until R is empty")
    s.add_argument("--graph", help="graph file; default is a random graph from --seed")
    s.add_argument("--size", type=int, default=12)
    s.add_argument("--max-steps", type=int, default=None)
    s.add_argument("--graph-out", help="write the final graph here")
    s.set_defaults(run=cmd_graph_run)
    return p


def _write(path, text):
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def run(argv=None) -> int:
    if hasattr(sys, "set_int_max_str_digits"):
        sys.set_int_max_str_digits(0)  # exact variances at Q = 10^4 have many thousand digits
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if a.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cols, rows, extra, fails = a.run(a)
    except ResourceLimitError as exc:
        print(f"resource limit: {exc}".splitlines()[0], file=sys.stderr)
        return EXIT_RESOURCE
    except InvariantViolation as exc:
        fails, cols = [str(exc)] + str(getattr(exc, "witness", "") or "").splitlines(), None
    except (ConfigError, DomainError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cols is not None:
        meta = {"profile": a.profile, "tau": a.tau or DEFAULT_TAU, "seed": a.seed, "version": __version__,
                "command": a.command if a.command != "graph" else f"graph-{a.graph_command}", **extra}
        _write(a.out, render(cols, rows, meta, a.format))
    if fails:
        path = a.report or (f"{a.out}.report.txt" if a.out else "quantds-report.txt")
        with open(path, "w") as fh:
            fh.write("\n".join(str(x) for x in fails) + "\n")
        print(f"invariant violation: {fails[0]} (report: {path})", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
