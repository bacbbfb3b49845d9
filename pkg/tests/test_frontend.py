import pytest

from gradverify.frontend import (ParseError, TypeCheckError, load, parse, print_program,
                                 type_check)
from gradverify.frontend import ast as A

from conftest import corpus_text

NAMES = ("withdraw", "list", "bst", "composite", "avl", "acyclic")


@pytest.mark.parametrize("name", NAMES)
def test_corpus_loads(name):
    prog = load(corpus_text(name), name)
    assert prog.methods


@pytest.mark.parametrize("name", NAMES)
def test_print_parse_round_trip(name):
    prog = parse(corpus_text(name), name)
    once = print_program(prog)
    twice = print_program(parse(once, name))
    assert once == twice


def test_lowering_is_a_fixed_point():
    core = load(corpus_text("list"))
    again = load(print_program(core))
    assert print_program(again) == print_program(core)


def test_imprecise_contract_parses():
    prog = parse("""
struct A { int f; };
void m(struct A* a)
  //@ requires ? && acc(a->f);
  //@ ensures ?;
{ a->f = 1; }
""")
    m = prog.methods[0]
    assert isinstance(m.pre, A.FImp)
    assert not A.is_precise(m.post)


@pytest.mark.parametrize("src", [
    "struct A { int f; ",
    "void m() { int x = ; }",
    "void m() { x = 1 }",
])
def test_syntax_errors(src):
    with pytest.raises(ParseError):
        parse(src)


def test_parse_error_position():
    with pytest.raises(ParseError) as info:
        parse("void m() {\n  int x = ;\n}", "bad.gvl")
    assert info.value.line == 2
    assert str(info.value).startswith("bad.gvl:2:")


@pytest.mark.parametrize("src", [
    "void m() { int x; x = true; }",
    "void m() { y = 1; }",
    "struct A { int f; }; void m(struct A* a) { int x; x = a->g; }",
    "void m() //@ requires acc(q(1)); \n{ }",
    "int m() { return true; }",
])
def test_type_errors(src):
    with pytest.raises(TypeCheckError):
        type_check(parse(src))


def test_reserved_names_rejected():
    src = "void m() { int _ownedFields; _ownedFields = 1; }"
    with pytest.raises((ParseError, TypeCheckError)):
        load(src)


def test_main_required_when_asked():
    with pytest.raises(TypeCheckError):
        load("void m() { }", require_main=True)


@pytest.mark.parametrize("text", [
    "? && (x == 0 ? true : x > 1)",
    "? && (x == 0 || x > 1)",
    "x > 0 && (x == 1 ? acc(p(x)) : true)",
])
def test_formula_printing_keeps_grouping(text):
    from gradverify.frontend import formula_str, parse_formula
    phi = parse_formula(text)
    assert formula_str(parse_formula(formula_str(phi))) == formula_str(phi)
    assert isinstance(parse_formula(formula_str(phi)), type(phi))
