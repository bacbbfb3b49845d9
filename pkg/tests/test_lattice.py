import itertools

import pytest

from gradverify.engine import verify
from gradverify.frontend import load, print_program
from gradverify.frontend import ast as A
from gradverify.frontend.printer import formula_str
from gradverify.lattice import (LatticeError, LatticePath, adjacent_pairs, enumerate_elements,
                                hosts, materialize, run_lattice, sample_paths, sample_points)

from conftest import corpus_text

SORTED = """
struct Node { int val; struct Node* next; };
typedef struct Node Node;

//@ predicate sortedSeg(Node* from, Node* to, int lo) =
//@   from == to ? true : acc(from->val) && acc(from->next) && lo <= from->val &&
//@     acc(sortedSeg(from->next, to, from->val));

void walk(Node* list, Node* curr, int val)
  //@ requires acc(sortedSeg(list, curr, 0)) && acc(curr->val) && curr->val <= val;
  //@ ensures true;
{
  while (false)
    //@ loop_invariant acc(sortedSeg(list, curr, 0)) && acc(curr->val) && curr->val <= val;
  {
  }
}
"""

SMALL = """
struct Cell { int v; };
typedef struct Cell Cell;

int get(Cell* c)
  //@ requires acc(c->v) && c->v >= 0;
  //@ ensures acc(c->v) && \\result >= 0 && c->v == \\result;
{
  return c->v;
}

int main()
  //@ requires true;
  //@ ensures true;
{
  Cell* c = alloc(struct Cell);
  c->v = 4;
  int r = get(c);
  return r;
}
"""


def small():
    return load(SMALL, "small.gvl")


def test_element_kinds_and_order():
    prog = small()
    els = enumerate_elements(prog)
    assert els == enumerate_elements(small())
    pre = [e for e in els if e.host == ("pre", "get")]
    assert [(e.kind, e.text) for e in pre] == [("acc", "acc(c.v)"), ("expr", "c.v >= 0"),
                                               ("imprecision", "")]
    # true contracts have no atoms, only the imprecision element
    main_pre = [e for e in els if e.host == ("pre", "main")]
    assert [e.kind for e in main_pre] == ["imprecision"]


def test_two_element_formula_gives_five_specifications():
    prog = load(SORTED, "sorted.gvl")
    els = enumerate_elements(prog)
    inv = [e for e in els if e.host == ("inv", "walk", 0)]
    atoms = [e for e in inv if e.kind != "imprecision"]
    assert len(atoms) == 3
    # restrict to the two non-predicate conjuncts of a smaller invariant
    prog2 = load(SORTED.replace(
        "//@ loop_invariant acc(sortedSeg(list, curr, 0)) && acc(curr->val) && curr->val <= val;",
        "//@ loop_invariant acc(sortedSeg(list, curr, 0)) && curr->val <= val;"), "s.gvl")
    inv = [e for e in enumerate_elements(prog2) if e.host == ("inv", "walk", 0)]
    assert len([e for e in inv if e.kind != "imprecision"]) == 2
    specs = set()
    for r in range(len(inv) + 1):
        for subset in itertools.combinations(inv, r):
            try:
                p = materialize(prog2, subset)
            except LatticeError:
                continue
            loop = next(s for s in A.walk_stmts(p.methods[0].body) if isinstance(s, A.While))
            specs.add(formula_str(loop.invariant))
    assert len(specs) == 5


def test_imprecise_program_is_not_a_complete_spec():
    with pytest.raises(LatticeError):
        enumerate_elements(load(corpus_text("withdraw"), "withdraw.gvl"))


def test_bottom_is_all_imprecise():
    prog = small()
    bottom = materialize(prog, [])
    for key, phi in hosts(bottom):
        assert formula_str(phi) == "?"


def test_top_is_the_original():
    prog = small()
    top = materialize(prog, enumerate_elements(prog))
    assert print_program(top) == print_program(prog)


def test_dropping_a_conjunct_keeps_the_rest_imprecise():
    prog = small()
    els = enumerate_elements(prog)
    keep = [e for e in els if not (e.host == ("post", "get") and e.index == 1)
            and not (e.host == ("post", "get") and e.kind == "imprecision")]
    p = materialize(prog, keep)
    get = next(m for m in p.methods if m.name == "get")
    assert formula_str(get.post) == "? && acc(c.v) && c.v == \\result"


def test_removing_imprecision_early_is_rejected():
    prog = small()
    els = enumerate_elements(prog)
    drop = [e for e in els if e.host == ("pre", "get") and e.kind == "imprecision"]
    with pytest.raises(LatticeError):
        materialize(prog, drop)


@pytest.mark.parametrize("name", ["list", "bst", "composite", "avl"])
def test_materialized_points_reparse(name):
    prog = load(corpus_text(name), name)
    els = enumerate_elements(prog)
    for pt in sample_points(els, 5, 11):
        text = print_program(materialize(prog, pt))
        # lowered programs carry reserved temporaries
        assert print_program(load(text, name, allow_reserved=True)) == text


def test_paths_are_reproducible_and_distinct():
    els = enumerate_elements(small())
    a = sample_paths(els, 16, 7)
    b = sample_paths(els, 16, 7)
    assert a == b
    assert len(set(p.order for p in a)) == 16
    assert sample_paths(els, 16, 8) != a


def test_path_orders_imprecision_after_its_atoms():
    els = enumerate_elements(load(corpus_text("list"), "list"))
    for p in sample_paths(els, 16, 3):
        assert sorted(p.order, key=str) == sorted(els, key=str)
        seen = set()
        for e in p.order:
            if e.kind == "imprecision":
                assert all((x.host, x.index) in seen for x in els
                           if x.host == e.host and x.kind != "imprecision")
            seen.add((e.host, e.index))


def test_too_many_paths():
    els = enumerate_elements(small())[:2]
    with pytest.raises(LatticeError):
        sample_paths(els, 3, 0)
    with pytest.raises(LatticeError):
        sample_paths(els, 0, 0)


def test_path_points():
    p = LatticePath(("a", "b", "c"))
    assert len(p) == 4
    assert p.point(0) == frozenset() and p.point(3) == {"a", "b", "c"}


def test_sample_points_are_distinct():
    els = enumerate_elements(load(corpus_text("bst"), "bst"))
    pts = sample_points(els, 50, 2)
    assert len(set(pts)) == 50


@pytest.fixture(scope="module")
def small_result():
    prog = small()
    paths = sample_paths(enumerate_elements(prog), 4, 1)
    return run_lattice(prog, paths, (1, 2), seed=3)


def test_run_lattice_endpoints(small_result):
    res = small_result
    assert res.violations == []
    n = len(res.elements)
    tops = [r for r in res.rows if r.step == n]
    bottoms = [r for r in res.rows if r.step == 0]
    assert len(tops) == len(bottoms) == 4
    for r in tops:
        assert r.vc_total == r.vc_discharged and r.residual == 0
        assert r.checks[("gradual", 1)] == 0
    for r in bottoms:
        assert r.checks[("gradual", 2)] > 0
        assert r.checks[("framing", 2)] > 0
    assert all(o == "completed" for r in res.rows for o in r.outcomes.values())


def test_run_lattice_is_reproducible(small_result):
    prog = small()
    paths = sample_paths(enumerate_elements(prog), 4, 1)
    again = run_lattice(prog, paths, (1, 2), seed=3)
    assert again.table() == small_result.table()
    assert again.summary() == small_result.summary()


def test_run_lattice_parallel_matches(small_result):
    prog = small()
    paths = sample_paths(enumerate_elements(prog), 4, 1)
    assert run_lattice(prog, paths, (1, 2), seed=3, jobs=3).table() == small_result.table()


def test_table_and_summary_layout(small_result):
    header = small_result.table().splitlines()[0].split(",")
    assert header[:7] == ["path", "step", "percent", "verified", "vc_total", "vc_discharged",
                          "residual"]
    assert "gradual@1" in header and "framing@2" in header
    summary = small_result.summary().splitlines()
    assert summary[0] == "percent,mode,workload,mean_checks"
    assert len(summary) == 1 + 3 * 3 * 2


def test_adjacent_pairs(small_result):
    pairs = adjacent_pairs(small_result)
    assert len(pairs) == 4 * len(small_result.elements)
    assert all(ok for _, _, ok in pairs)


def test_cache_is_reused():
    prog = small()
    paths = sample_paths(enumerate_elements(prog), 2, 1)
    cache = {}
    run_lattice(prog, paths, (1,), ("gradual",), cache=cache)
    size = len(cache)
    run_lattice(prog, paths, (1,), ("gradual",), cache=cache)
    assert len(cache) == size
