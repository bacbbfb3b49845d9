"""Parsing, type checking and lowering of .gvl programs."""
from .lexer import ParseError
from .parser import parse, parse_formula, parse_expr
from .typecheck import TypeCheckError, type_check
from .lower import lower
from .printer import print_program, formula_str, expr_str, stmt_str


def load(src, filename="<input>", allow_reserved=False, require_main=False):
    """Parse, type-check and lower a program; the result is re-checked."""
    prog = parse(src, filename, allow_reserved)
    type_check(prog, require_main)
    core = lower(prog)
    type_check(core, require_main)
    return core


def load_file(path, **kw):
    with open(path, encoding="utf-8") as f:
        return load(f.read(), str(path), **kw)
