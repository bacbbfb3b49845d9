import re
from collections import Counter

import pytest

from gradverify.engine import format_checks, verify
from gradverify.frontend import load, print_program
from gradverify.frontend import ast as A
from gradverify.instrument import (HEADER, InstrumentError, instrument, needs_separation,
                                   parse_report, parse_site)
from gradverify.frontend import parse_formula
from gradverify.lattice import enumerate_elements, materialize, sample_paths, sample_points
from gradverify.runtime import read_provenance

from conftest import corpus_text


def prepared(name):
    prog = load(corpus_text(name), f"{name}.gvl")
    return prog, format_checks(verify(prog))


def kinds(ins):
    return Counter(p.kind for p in ins.provenance)


def test_parse_site():
    assert parse_site("@3:pre") == (3, "pre")
    assert parse_site("@12:end") == (12, "end")
    assert parse_site("@entry") == (None, "entry")
    assert parse_site("@exit") == (None, "exit")


def test_report_round_trip():
    _, text = prepared("withdraw")
    rep = parse_report(text)
    assert rep.ok
    assert len(rep.checks) == 3
    assert rep.checks[2].needs_sep


def test_report_rejects_bad_header():
    with pytest.raises(InstrumentError):
        parse_report("something else\n")


def test_unknown_mode():
    prog, text = prepared("withdraw")
    with pytest.raises(InstrumentError):
        instrument(prog, text, "eager")


def test_withdraw_gradual_layout():
    prog, text = prepared("withdraw")
    src = instrument(prog, text, "gradual").source()
    assert src.startswith(f"{HEADER} mode=gradual\n")
    body = src.split("method withdraw", 1)[1].split("\n}\n", 1)[0]
    # the branch condition is versioned before the branch executes
    assert body.index("_cond_1 = a1 == null || a2 == null;") < body.index("if (a1 == null")
    assert "if (!_cond_1) {\n      assertAcc(_ownedFields, a2, 0," in body
    assert "assertCheck(a2.balance >= 0," in body
    assert "_sep_positive(res, _tmp1);" in body
    # contracts were discharged statically or turned into checks
    assert "//@ requires true;" in body


def test_withdraw_provenance_table():
    prog, text = prepared("withdraw")
    ins = instrument(prog, text, "gradual")
    table = read_provenance(ins.source())
    assert [p.text for p in table[:3]] == ["acc(positive(res))", "acc(a2.balance)",
                                          "a2.balance >= 0"]
    assert table[1].location == "withdraw.gvl:22:9"
    assert ins.sites == 3


@pytest.mark.parametrize("name", ["withdraw", "list", "bst", "composite", "avl", "acyclic"])
@pytest.mark.parametrize("mode", ["gradual", "dynamic", "framing"])
def test_output_reparses_and_typechecks(name, mode):
    prog, text = prepared(name)
    src = instrument(prog, text, mode).source()
    again = load(src, "x", allow_reserved=True)
    assert print_program(again) == src.split("\n\n", 1)[1]


def test_instrument_is_deterministic():
    prog, text = prepared("avl")
    assert instrument(prog, text, "dynamic").source() == instrument(prog, text, "dynamic").source()


@pytest.mark.parametrize("name", ["withdraw", "list"])
def test_framing_mode_only_checks_access(name):
    prog, text = prepared(name)
    ins = instrument(prog, text, "framing")
    assert set(kinds(ins)) <= {"access", "transfer"}
    assert kinds(ins)["access"] > 0
    assert "assertCheck" not in ins.source()


@pytest.mark.parametrize("name", ["list", "bst", "composite", "avl"])
def test_fully_specified_gradual_inserts_nothing(name):
    prog, text = prepared(name)
    ins = instrument(prog, text, "gradual")
    assert ins.static_checks == 0
    assert instrument(prog, text, "dynamic").static_checks > 0


def test_dynamic_checks_every_contract():
    prog, text = prepared("withdraw")
    ins = instrument(prog, text, "dynamic")
    c = kinds(ins)
    assert c["access"] == 3  # a1.balance read, a2.balance read, a1.balance write
    assert c["check"] > 3


def test_needs_separation():
    assert needs_separation(parse_formula("acc(p(x))"))
    assert needs_separation(parse_formula("acc(x.f) && acc(y.f)"))
    assert not needs_separation(parse_formula("acc(x.f) && x.f > 0"))


def _cond_uses(src):
    """For each method, report conds read in a guard before any assignment."""
    bad = []
    for chunk in re.split(r"\n(?=\S)", src):
        assigned = set()
        for line in chunk.splitlines():
            m = re.match(r"\s*(_cond_\d+) = ", line)
            if m:
                assigned.add(m.group(1))
                continue
            if line.lstrip().startswith("if ("):
                for c in re.findall(r"_cond_\d+", line):
                    if c not in assigned:
                        bad.append((c, line.strip()))
    return bad


@pytest.mark.parametrize("name", ["withdraw", "composite", "avl"])
def test_branch_conditions_are_set_before_use(name):
    prog, _ = prepared(name)
    els = enumerate_elements(load(corpus_text(name), name)) if name != "withdraw" else None
    points = sample_points(els, 25, 1) if els else [None]
    if name == "composite":
        # a point whose fold re-tests a condition the unfold already branched on
        points.append(sample_paths(els, 16, 7)[5].point(13))
    for pt in points:
        p = prog if pt is None else materialize(prog, pt)
        out = verify(p)
        assert out.ok
        src = instrument(p, format_checks(out), "gradual").source()
        assert _cond_uses(src) == []


def test_verify_report_from_file_matches_single_shot(tmp_path):
    prog, text = prepared("acyclic")
    path = tmp_path / "acyclic.checks"
    path.write_text(text)
    assert instrument(prog, path.read_text(), "gradual").source() == \
        instrument(prog, parse_report(text), "gradual").source()


def test_call_passes_ownership():
    prog, text = prepared("acyclic")
    src = instrument(prog, text, "gradual").source()
    main = src.split("int main()", 1)[1]
    assert "_ownedFields = initOwnedFields();" in main
    assert "insertLast(" in main and "_ownedFields)" in main
