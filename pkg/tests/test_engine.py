import itertools
import re
import time
from pathlib import Path

import pytest

from gradverify.engine import format_checks, verify
from gradverify.frontend import load
from gradverify.instrument import parse_report
from gradverify.state import dump

from conftest import corpus_text

GOLDEN = Path(__file__).parent / "golden"


def withdraw():
    return load(corpus_text("withdraw"), "withdraw.gvl")


def test_withdraw_report_golden():
    t = time.perf_counter()
    out = verify(withdraw())
    elapsed = time.perf_counter() - t
    assert out.ok
    assert format_checks(out) == (GOLDEN / "withdraw.checks").read_text()
    assert elapsed < 1.0


def test_withdraw_report_content():
    rep = parse_report(format_checks(verify(withdraw())))
    formulas = [(c.formula, c.needs_sep) for c in rep.checks]
    assert formulas == [("acc(a2.balance)", False), ("a2.balance >= 0", False),
                        ("acc(positive(res))", True)]
    for c in rep.checks:
        assert [(b.text, b.positive) for b in c.bcs] == [("a1 == null || a2 == null", False)]
    fold, post = rep.checks[0], rep.checks[2]
    assert fold.origin == "fold" and fold.location.endswith(":22:9")
    assert post.site == (None, "exit")


# Symbolic state after each statement of withdraw, keyed by trace event and
# source line. Fresh names are arbitrary: rows are compared up to renaming.
EXPECTED_STATES = [
    ("enter", 14, False, [], ["geqTo(t1,t2)"],
     {"a1": "t1", "a2": "t2", "res": "t3"}, []),
    ("after", 15, True, ["acc(t1,balance,p1)", "acc(t2,balance,p2)"], [],
     {"a1": "t1", "a2": "t2", "res": "t3"},
     ["t1 != null", "t2 != null", "p1 >= p2", "p2 >= 0"]),
    ("enter", 18, True, ["acc(t1,balance,p1)", "acc(t2,balance,p2)"], [],
     {"a1": "t1", "a2": "t2", "res": "t3"},
     ["t1 != null", "t2 != null", "p1 >= p2", "p2 >= 0"]),
    ("after", 19, True, ["acc(t1,balance,p1)", "acc(t2,balance,p2)"], [],
     {"a1": "t1", "a2": "t2", "res": "t3", "newB": "t4"},
     ["t1 != null", "t2 != null", "p1 >= p2", "p2 >= 0", "t4 == p1 - p2"]),
    ("after", 20, True, [], ["acc(t1,balance,p3)"],
     {"a1": "t1", "a2": "t2", "res": "t3", "newB": "t4"},
     ["t1 != null", "t2 != null", "p1 >= p2", "p2 >= 0", "t4 == p1 - p2", "p3 == t4"]),
    ("after", 21, True, [], ["positive(t1)"],
     {"a1": "t1", "a2": "t2", "res": "t3", "newB": "t4"},
     ["t1 != null", "t2 != null", "p1 >= p2", "p2 >= 0", "t4 == p1 - p2", "p3 == t4"]),
    ("after", 22, True, [], ["positive(t2)"],
     {"a1": "t1", "a2": "t2", "res": "t3", "newB": "t4"},
     ["t1 != null", "t2 != null", "p1 >= p2", "p2 >= 0", "t4 == p1 - p2", "p3 == t4"]),
    ("after", 23, True, [], ["positive(t2)"],
     {"a1": "t1", "a2": "t2", "res": "t3", "newB": "t4"},
     ["t1 != null", "t2 != null", "p1 >= p2", "p2 >= 0", "t4 == p1 - p2", "p3 == t4",
      "t3 == t1"]),
]

ATOM = re.compile(r"\b([a-z])(\d+)\b")


def _norm_chunk(s):
    return s.replace(" ", "")


def _norm_pc(s):
    m = re.fullmatch(r"(.+?) == (.+)", s)
    if m:
        return " == ".join(sorted(m.groups()))
    return s


def canonical(row):
    """Hashable view of a state row with every atom renamed by `row`'s map."""
    imprecise, hq, h, store, pc = row
    return (imprecise, sorted(_norm_chunk(c) for c in hq), sorted(_norm_chunk(c) for c in h),
            sorted(store.items()), sorted(_norm_pc(c) for c in pc))


def rename(row, mapping):
    sub = lambda s: ATOM.sub(lambda m: mapping.get(m.group(0), m.group(0)), s)
    imprecise, hq, h, store, pc = row
    return (imprecise, [sub(c) for c in hq], [sub(c) for c in h],
            {k: sub(v) for k, v in store.items()}, [sub(c) for c in pc])


def atoms_in(row):
    imprecise, hq, h, store, pc = row
    text = " ".join(hq + h + list(store.values()) + pc)
    return sorted({m.group(0) for m in ATOM.finditer(text)})


def alpha_equivalent(expected, actual):
    ea, aa = atoms_in(expected), atoms_in(actual)
    groups = sorted({a[0] for a in ea} | {a[0] for a in aa})
    per_group = []
    for g in groups:
        xs = [a for a in ea if a[0] == g]
        ys = [a for a in aa if a[0] == g]
        if len(xs) != len(ys):
            return False
        per_group.append([dict(zip(xs, p)) for p in itertools.permutations(ys)])
    target = canonical(actual)
    for combo in itertools.product(*per_group):
        mapping = {}
        for m in combo:
            mapping.update(m)
        if canonical(rename(expected, mapping)) == target:
            return True
    return False


def traced_states():
    rows = {}

    def tracer(event, node, sigma):
        d = dump(sigma)
        line = node.span[0]
        # chunk strings use ", " between arguments; compare without spaces
        rows[(event, line)] = (d["imprecise"], d["hq"], d["h"], d["store"], d["pc"])
    out = verify(withdraw(), tracer=tracer)
    assert out.ok
    return rows


def test_alpha_equivalence_helper():
    a = (True, ["acc(t1,f,p1)"], [], {"x": "t1"}, ["p1 >= 0"])
    b = (True, ["acc(t7,f,p2)"], [], {"x": "t7"}, ["p2 >= 0"])
    c = (True, ["acc(t7,f,p2)"], [], {"x": "t7"}, ["p7 >= 0"])
    assert alpha_equivalent(a, b)
    assert not alpha_equivalent(a, c)


@pytest.mark.parametrize("row", EXPECTED_STATES, ids=lambda r: f"{r[0]}-{r[1]}")
def test_withdraw_state_trace(row):
    event, line, *state = row
    actual = traced_states()
    assert (event, line) in actual
    assert alpha_equivalent(tuple(state), actual[(event, line)])


def test_infeasible_branch_is_pruned():
    actual = traced_states()
    assert ("after", 17) not in actual
    assert ("enter", 16) not in actual


@pytest.mark.parametrize("name", ["list", "bst", "composite", "avl", "acyclic"])
def test_benchmarks_verify(name):
    out = verify(load(corpus_text(name), name))
    assert out.ok, out.diagnostics
    if name != "acyclic":
        assert out.checks == [] and out.vc_total == out.vc_discharged


def test_static_failure_is_reported():
    src = """
struct A { int f; };
void m(struct A* a)
  //@ requires acc(a->f) && a->f > 0;
  //@ ensures acc(a->f) && a->f > 5;
{ }
"""
    out = verify(load(src, "bad.gvl"))
    assert not out.ok
    assert "verdict failure" in format_checks(out)


def test_imprecise_contract_needs_runtime_check():
    src = """
struct A { int f; };
void m(struct A* a)
  //@ requires ? && a->f > 0;
  //@ ensures acc(a->f) && a->f > 5;
{ }
"""
    out = verify(load(src, "imp.gvl"))
    assert out.ok
    # acc(a.f) is framed optimistically by the precondition's heap read
    texts = sorted(rc.text for _, rc in out.checks)
    assert texts == ["a.f > 5"]


def test_contradiction_fails_even_when_imprecise():
    src = """
void m(int x)
  //@ requires ? && x > 0;
  //@ ensures ? && x < 0;
{ }
"""
    assert not verify(load(src, "c.gvl")).ok
