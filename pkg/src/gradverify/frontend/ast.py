"""AST for the .gvl language: expressions, formulas, statements, declarations.

Every node carries a program-unique `nid` used as its location, and a
`span` (line, col) for diagnostics. Structural equality is printer-based
(see printer.py); node identity is what the engine uses for locations.
"""
import itertools
from dataclasses import dataclass, field
from typing import Optional

_nids = itertools.count(1)


def fresh_nid():
    return next(_nids)


@dataclass(frozen=True)
class Type:
    kind: str  # int | bool | char | ref | null | void
    record: Optional[str] = None

    def __str__(self):
        if self.kind == "ref":
            return f"{self.record}*"
        return self.kind


INT = Type("int")
BOOL = Type("bool")
CHAR = Type("char")
NULLT = Type("null")
VOID = Type("void")


def ref(name):
    return Type("ref", name)


class Node:
    nid: int
    span: tuple

    def _init_node(self, span):
        self.nid = fresh_nid()
        self.span = span or (0, 0)


# ---------------------------------------------------------------- expressions

class Expr(Node):
    ty: Optional[Type] = None


class Lit(Expr):
    def __init__(self, kind, value, span=None):
        self.kind = kind  # int | bool | null | char
        self.value = value
        self._init_node(span)


class Var(Expr):
    def __init__(self, name, span=None):
        self.name = name
        self._init_node(span)


class FieldAcc(Expr):
    def __init__(self, obj, field, span=None):
        self.obj = obj
        self.field = field
        self._init_node(span)


class Unop(Expr):
    def __init__(self, op, arg, span=None):
        self.op = op  # ! or -
        self.arg = arg
        self._init_node(span)


class Binop(Expr):
    def __init__(self, op, left, right, span=None):
        self.op = op
        self.left = left
        self.right = right
        self._init_node(span)


class Ternary(Expr):
    def __init__(self, cond, then, other, span=None):
        self.cond = cond
        self.then = then
        self.other = other
        self._init_node(span)


class CallE(Expr):
    """Method call in expression position (removed by lowering) or a
    predicate instance inside a specification."""

    def __init__(self, name, args, span=None):
        self.name = name
        self.args = args
        self._init_node(span)


class AllocE(Expr):
    def __init__(self, record, span=None):
        self.record = record
        self._init_node(span)


class AccE(Expr):
    """acc(...) as parsed; converted to a formula node."""

    def __init__(self, target, span=None):
        self.target = target
        self._init_node(span)


class ImpE(Expr):
    """The `?` token as parsed; converted to a formula node."""

    def __init__(self, span=None):
        self._init_node(span)


class Sym(Expr):
    """A symbolic value standing in for an expression (engine only)."""

    def __init__(self, term, origin_nid=None):
        self.term = term
        self.nid = origin_nid if origin_nid is not None else fresh_nid()
        self.span = (0, 0)


# ------------------------------------------------------------------- formulas

class Formula(Node):
    pass


class FExpr(Formula):
    def __init__(self, expr, span=None):
        self.expr = expr
        self._init_node(span)


class FAcc(Formula):
    def __init__(self, target, span=None):
        self.target = target  # FieldAcc
        self._init_node(span)


class FPred(Formula):
    def __init__(self, name, args, span=None):
        self.name = name
        self.args = args
        self._init_node(span)


class FSep(Formula):
    def __init__(self, left, right, span=None):
        self.left = left
        self.right = right
        self._init_node(span)


class FCond(Formula):
    def __init__(self, cond, then, other, span=None):
        self.cond = cond
        self.then = then
        self.other = other
        self._init_node(span)


class FImp(Formula):
    """`? && body`; a bare `?` has body FExpr(true)."""

    def __init__(self, body, span=None):
        self.body = body
        self._init_node(span)


def ftrue(span=None):
    return FExpr(Lit("bool", True, span), span)


def is_precise(phi):
    return not isinstance(phi, FImp)


def static_part(phi):
    return phi.body if isinstance(phi, FImp) else phi


def conjuncts(phi):
    """Flatten a separating-conjunction tree into its conjunct list."""
    if isinstance(phi, FSep):
        return conjuncts(phi.left) + conjuncts(phi.right)
    return [phi]


def sep_all(parts, span=None):
    if not parts:
        return ftrue(span)
    out = parts[0]
    for p in parts[1:]:
        out = FSep(out, p, span)
    return out


# ----------------------------------------------------------------- statements

class Stmt(Node):
    pass


class Block(Stmt):
    def __init__(self, stmts, span=None):
        self.stmts = stmts
        self._init_node(span)


class VarDecl(Stmt):
    def __init__(self, name, ty, init=None, span=None):
        self.name = name
        self.ty = ty
        self.init = init
        self._init_node(span)


class Assign(Stmt):
    def __init__(self, target, expr, span=None):
        self.target = target  # variable name (core) or lvalue Expr (surface)
        self.expr = expr
        self._init_node(span)


class FieldAssign(Stmt):
    def __init__(self, obj, field, expr, span=None):
        self.obj = obj
        self.field = field
        self.expr = expr
        self._init_node(span)


class AllocS(Stmt):
    def __init__(self, target, record, span=None):
        self.target = target
        self.record = record
        self._init_node(span)


class CallS(Stmt):
    def __init__(self, target, name, args, span=None):
        self.target = target  # variable name or None
        self.name = name
        self.args = args
        self._init_node(span)


class AssertS(Stmt):
    """Dynamic assert(e): checked only at run time."""

    def __init__(self, expr, span=None):
        self.expr = expr
        self._init_node(span)


class StaticAssert(Stmt):
    def __init__(self, formula, span=None):
        self.formula = formula
        self._init_node(span)


class Fold(Stmt):
    def __init__(self, name, args, span=None):
        self.name = name
        self.args = args
        self._init_node(span)


class Unfold(Stmt):
    def __init__(self, name, args, span=None):
        self.name = name
        self.args = args
        self._init_node(span)


class If(Stmt):
    def __init__(self, cond, then, other, span=None):
        self.cond = cond
        self.then = then
        self.other = other
        self._init_node(span)


class While(Stmt):
    def __init__(self, cond, invariant, body, span=None):
        self.cond = cond
        self.invariant = invariant
        self.body = body
        self._init_node(span)


class For(Stmt):
    def __init__(self, init, cond, step, invariant, body, span=None):
        self.init = init
        self.cond = cond
        self.step = step
        self.invariant = invariant
        self.body = body
        self._init_node(span)


class Return(Stmt):
    def __init__(self, expr, span=None):
        self.expr = expr
        self._init_node(span)


class ExprStmt(Stmt):
    def __init__(self, expr, span=None):
        self.expr = expr
        self._init_node(span)


# ---------------------------------------------------------------- declarations

@dataclass(eq=False)
class RecordDecl:
    name: str
    fields: list
    span: tuple = (0, 0)

    def field_index(self, name):
        for i, (fname, _) in enumerate(self.fields):
            if fname == name:
                return i
        raise KeyError(name)

    def field_type(self, name):
        return self.fields[self.field_index(name)][1]


@dataclass(eq=False)
class PredicateDecl:
    name: str
    params: list
    body: Formula
    span: tuple = (0, 0)


@dataclass(eq=False)
class MethodDecl:
    name: str
    params: list
    ret: Optional[tuple]  # (name, Type) or None
    pre: Formula
    post: Formula
    body: Optional[Block]
    span: tuple = (0, 0)
    style: str = "c"  # c | method
    extra: dict = field(default_factory=dict)


RESULT = "\\result"


@dataclass(eq=False)
class Program:
    records: list = field(default_factory=list)
    predicates: list = field(default_factory=list)
    methods: list = field(default_factory=list)
    filename: str = "<input>"

    def record(self, name):
        for r in self.records:
            if r.name == name:
                return r
        raise KeyError(name)

    def predicate(self, name):
        for p in self.predicates:
            if p.name == name:
                return p
        raise KeyError(name)

    def method(self, name):
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)

    def has_predicate(self, name):
        return any(p.name == name for p in self.predicates)

    def has_method(self, name):
        return any(m.name == name for m in self.methods)


def walk_expr(e):
    yield e
    if isinstance(e, FieldAcc):
        yield from walk_expr(e.obj)
    elif isinstance(e, Unop):
        yield from walk_expr(e.arg)
    elif isinstance(e, Binop):
        yield from walk_expr(e.left)
        yield from walk_expr(e.right)
    elif isinstance(e, Ternary):
        yield from walk_expr(e.cond)
        yield from walk_expr(e.then)
        yield from walk_expr(e.other)
    elif isinstance(e, CallE):
        for a in e.args:
            yield from walk_expr(a)
    elif isinstance(e, AccE):
        yield from walk_expr(e.target)


def walk_formula(phi):
    """Yield formula nodes and the expressions they contain."""
    yield phi
    if isinstance(phi, FExpr):
        yield from walk_expr(phi.expr)
    elif isinstance(phi, FAcc):
        yield from walk_expr(phi.target)
    elif isinstance(phi, FPred):
        for a in phi.args:
            yield from walk_expr(a)
    elif isinstance(phi, FSep):
        yield from walk_formula(phi.left)
        yield from walk_formula(phi.right)
    elif isinstance(phi, FCond):
        yield from walk_expr(phi.cond)
        yield from walk_formula(phi.then)
        yield from walk_formula(phi.other)
    elif isinstance(phi, FImp):
        yield from walk_formula(phi.body)


def child_stmts(s):
    if isinstance(s, Block):
        return list(s.stmts)
    if isinstance(s, If):
        return [s.then, s.other]
    if isinstance(s, While):
        return [s.body]
    if isinstance(s, For):
        return [x for x in (s.init, s.step, s.body) if x is not None]
    return []


def walk_stmts(s):
    yield s
    for c in child_stmts(s):
        yield from walk_stmts(c)
