"""Acceptance gate: one pass/fail line per criterion.

Run under pytest (the lines appear in the terminal summary) or directly with
`python3 tests/test_acceptance.py`. The lattice criteria run the four
benchmarks over 16 paths each and take several minutes.
"""
import sys
import time
from pathlib import Path

if __name__ == "__main__":
    sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))
    sys.path.insert(0, str(Path(__file__).resolve().parent))

from gradverify.engine import format_checks, verify
from gradverify.frontend import load
from gradverify.instrument import instrument, parse_report
from gradverify.lattice import (adjacent_pairs, enumerate_elements, materialize, run_lattice,
                                sample_paths, sample_points)
from gradverify.runtime import OwnedFields, VerificationFailure, run
from gradverify.solver import Solver

from conftest import BENCHMARKS, corpus_text
from formulas import assignments, bounds, evaluate, holds, random_problem
import test_engine
import test_runtime

RESULTS = {}
OMEGA = 16
PATHS = 16
PATH_SEED = 7


def record(n, ok, detail):
    RESULTS[n] = (ok, detail)
    print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    assert ok, detail


def benchmark(name):
    return load(corpus_text(name), f"{name}.gvl")


_lattice = {}


def lattice_results():
    """16-path gradual/dynamic runs of every benchmark at the reference workload."""
    if not _lattice:
        for name in BENCHMARKS:
            prog = benchmark(name)
            paths = sample_paths(enumerate_elements(prog), PATHS, PATH_SEED)
            _lattice[name] = run_lattice(prog, paths, (OMEGA,), ("gradual", "dynamic"))
    return _lattice


# ----------------------------------------------------------------- criteria

def criterion_1():
    prog = test_engine.withdraw()
    t = time.perf_counter()
    out = verify(prog)
    elapsed = time.perf_counter() - t
    golden = (test_engine.GOLDEN / "withdraw.checks").read_text()
    rep = parse_report(format_checks(out))
    ok = out.ok and format_checks(out) == golden and elapsed < 1.0
    return ok, f"{len(rep.checks)} checks, exact report match={format_checks(out) == golden}, " \
               f"{elapsed * 1000:.0f} ms"


def criterion_2():
    actual = test_engine.traced_states()
    bad = [f"{e}:{l}" for e, l, *state in test_engine.EXPECTED_STATES
           if (e, l) not in actual or not test_engine.alpha_equivalent(tuple(state), actual[(e, l)])]
    pruned = ("after", 17) not in actual
    return not bad and pruned, f"{len(test_engine.EXPECTED_STATES)} states, mismatches={bad}"


def criterion_3():
    parts, ok = [], True
    for name in BENCHMARKS:
        prog = benchmark(name)
        out = verify(prog)
        report = format_checks(out)
        counts = {}
        for mode in ("dynamic", "framing"):
            ins = instrument(prog, report, mode)
            counts[mode] = ins.static_checks
        ok &= out.ok and not out.checks and all(c > 0 for c in counts.values())
        parts.append(f"{name}: R={len(out.checks)} dyn={counts['dynamic']} "
                     f"frm={counts['framing']}")
    return ok, "; ".join(parts)


def criterion_4(n=500, seed=2024):
    parts, ok = [], True
    for name in BENCHMARKS:
        prog = benchmark(name)
        points = sample_points(enumerate_elements(prog), n, seed)
        failed = sum(1 for pt in points if not verify(materialize(prog, pt)).ok)
        ok &= failed == 0 and len(points) >= 500
        parts.append(f"{name}: {len(points) - failed}/{len(points)}")
    return ok, "verified " + "; ".join(parts)


def criterion_5():
    workloads = (8, 16, 32)
    total, bad = 0, []
    for name in BENCHMARKS:
        prog = benchmark(name)
        paths = sample_paths(enumerate_elements(prog), 3, 11)
        res = run_lattice(prog, paths, workloads, ("gradual",))
        pairs = adjacent_pairs(res, workloads)
        total += len(pairs)
        bad += [(name, p, s) for p, s, good in pairs if not good]
        bad += [(name, p, s, "static") for p, s, _ in res.violations]
    return total >= 100 and not bad, f"{total} adjacent pairs at workloads {workloads}, " \
                                     f"violations={bad[:5]}"


def criterion_6():
    parts, ok = [], True
    for name, res in lattice_results().items():
        n = len(res.elements)
        for p in sorted({r.path for r in res.rows}):
            rows = res.path_rows(p)
            top, bottom = rows[-1], rows[0]
            ok &= top.step == n and bottom.step == 0
            ok &= top.vc_discharged == top.vc_total
            ok &= top.checks[("gradual", OMEGA)] == 0
            ok &= (bottom.checks.get(("gradual", OMEGA)) or 0) > 0
        ok &= not res.violations
        bottoms = sorted({r.checks[("gradual", OMEGA)] for r in res.rows if r.step == 0})
        parts.append(f"{name}: top 0, bottom {bottoms}")
    return ok, "; ".join(parts)


def criterion_7():
    parts, ok = [], True
    for name, res in lattice_results().items():
        g = res.mean_checks("gradual", OMEGA)
        d = res.mean_checks("dynamic", OMEGA)
        tops = [r for r in res.rows if r.step == len(res.elements)]
        ratio = max(r.checks[("gradual", OMEGA)] / r.checks[("dynamic", OMEGA)] for r in tops)
        ok &= g < d and ratio == 0
        parts.append(f"{name}: {g:.0f} < {d:.0f} ({100 * g / d:.0f}%), top ratio {ratio}")
    return ok, "; ".join(parts)


def criterion_8():
    parts, ok = [], True
    for name, nodes in (("acyclic_swapped_branch", 1), ("acyclic_swapped_args", 2)):
        ins = test_runtime.instrumented(corpus_text(name), "gradual", f"{name}.gvl")
        rep = run(ins.program, workload=nodes, provenance=ins.provenance)
        good = (rep.outcome == "verification-failure"
                and rep.message.startswith("acc(s.val) in predicate acyclicSeg")
                and "field of null" in rep.message)
        ok &= good
        parts.append(f"{name} ({nodes} node): {rep.message}")
    ins = test_runtime.instrumented(corpus_text("acyclic"), "gradual", "acyclic.gvl")
    ok &= all(run(ins.program, workload=w, provenance=ins.provenance).ok for w in (1, 2, 3))
    return ok, "; ".join(parts)


def criterion_9(n=1000):
    unsound = not_minimal = 0
    solver = Solver()
    for seed in range(n):
        vars_, pi, t = random_problem(seed)
        pi = pi + bounds(vars_)
        envs = [e for e in assignments([v.value for v in vars_]) if holds(pi, e)]
        d = solver.diff(pi, t)
        if not all(evaluate(t, e) for e in envs if holds(d, e)):
            unsound += 1
        if any(all(evaluate(c, e) for e in envs) for c in d):
            not_minimal += 1
    return unsound == 0 and not_minimal == 0, \
        f"{n} formulas: unsound={unsound} non-minimal={not_minimal}"


def criterion_10(sequences=10_000):
    it = test_runtime.interp(test_runtime.instrumented(test_runtime.LENGTH))
    node = test_runtime.build_list(it, OwnedFields(it.counter), 1)
    tmp = OwnedFields(it.counter)
    it.sep_insert(tmp, node, 0, 0)
    try:
        it.sep_insert(tmp, node, 0, 0)
        dup = False
    except VerificationFailure:
        dup = True
    src, dst = OwnedFields(it.counter), OwnedFields(it.counter)
    head = test_runtime.build_list(it, src, 3)
    it.call("_fp_pre_touch", [head, src, dst], (0, 0))
    oracle = len(test_runtime.walk_cells(head))
    conserved = sum(1 for s in range(sequences) if test_runtime.conserves(s))
    ok = dup and len(dst) == oracle == 9 and conserved == sequences
    return ok, f"duplicate detected={dup}; 3-node footprint {len(dst)} cells (walk {oracle}); " \
               f"{conserved}/{sequences} sequences conserve ownership"


# -------------------------------------------------------------------- tests

def test_criterion_01_withdraw_report():
    record(1, *criterion_1())


def test_criterion_02_withdraw_states():
    record(2, *criterion_2())


def test_criterion_03_conservative_extension():
    record(3, *criterion_3())


def test_criterion_04_static_gradual_guarantee():
    record(4, *criterion_4())


def test_criterion_05_dynamic_gradual_guarantee():
    record(5, *criterion_5())


def test_criterion_06_trend_endpoints():
    record(6, *criterion_6())


def test_criterion_07_gradual_beats_dynamic():
    record(7, *criterion_7())


def test_criterion_08_faulty_predicates():
    record(8, *criterion_8())


def test_criterion_09_diff_properties():
    record(9, *criterion_9())


def test_criterion_10_ownership():
    record(10, *criterion_10())


if __name__ == "__main__":
    failed = 0
    for k in range(1, 11):
        try:
            record(k, *globals()[f"criterion_{k}"]())
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
