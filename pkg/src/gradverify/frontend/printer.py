"""Pretty-printer producing re-parseable .gvl text."""
from . import ast as A

PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, "<=": 4, ">": 4, ">=": 4,
        "+": 5, "-": 5, "*": 6, "/": 6, "%": 6}


def _prec(e):
    if isinstance(e, A.Ternary):
        return 0
    if isinstance(e, A.Binop):
        return PREC[e.op]
    if isinstance(e, A.Unop):
        return 7
    if isinstance(e, A.Lit) and e.kind == "int" and e.value < 0:
        return 7
    return 8


def expr_str(e, need=0):
    s = _expr(e)
    return f"({s})" if _prec(e) < need else s


def _expr(e):
    if isinstance(e, A.Lit):
        if e.kind == "bool":
            return "true" if e.value else "false"
        if e.kind == "null":
            return "null"
        return str(e.value)
    if isinstance(e, A.Var):
        return e.name
    if isinstance(e, A.FieldAcc):
        return f"{expr_str(e.obj, 8)}.{e.field}"
    if isinstance(e, A.Unop):
        return f"{e.op}{expr_str(e.arg, 7)}"
    if isinstance(e, A.Binop):
        p = PREC[e.op]
        return f"{expr_str(e.left, p)} {e.op} {expr_str(e.right, p + 1)}"
    if isinstance(e, A.Ternary):
        return f"{expr_str(e.cond, 1)} ? {expr_str(e.then, 0)} : {expr_str(e.other, 0)}"
    if isinstance(e, A.CallE):
        return f"{e.name}({', '.join(expr_str(a) for a in e.args)})"
    if isinstance(e, A.AllocE):
        return f"alloc(struct {e.record})"
    if isinstance(e, A.AccE):
        return f"acc({expr_str(e.target)})"
    if isinstance(e, A.ImpE):
        return "?"
    if isinstance(e, A.Sym):
        return f"<{e.term}>"
    raise TypeError(f"cannot print {type(e).__name__}")


def formula_str(phi):
    if isinstance(phi, A.FImp):
        if _is_true(phi.body):
            return "?"
        return "? && " + _sep(phi.body, True)
    return _sep(phi)


def _is_true(phi):
    return (isinstance(phi, A.FExpr) and isinstance(phi.expr, A.Lit)
            and phi.expr.kind == "bool" and phi.expr.value is True)


def _sep(phi, inner=False):
    if isinstance(phi, A.FSep):
        return f"{_sep(phi.left, True)} && {_sep(phi.right, True)}"
    if isinstance(phi, A.FExpr):
        return expr_str(phi.expr, 3 if inner else 0)
    if isinstance(phi, A.FAcc):
        return f"acc({expr_str(phi.target)})"
    if isinstance(phi, A.FPred):
        return f"acc({phi.name}({', '.join(expr_str(a) for a in phi.args)}))"
    if isinstance(phi, A.FCond):
        s = f"({expr_str(phi.cond)}) ? {_sep(phi.then)} : {_sep(phi.other)}"
        return f"({s})" if inner else s
    if isinstance(phi, A.FImp):
        return f"({formula_str(phi)})"
    raise TypeError(f"cannot print formula {type(phi).__name__}")


def type_str(t):
    return str(t)


class _Printer:
    def __init__(self):
        self.lines = []

    def emit(self, depth, text):
        self.lines.append("  " * depth + text)

    def block_body(self, b, depth):
        for s in b.stmts:
            self.stmt(s, depth)

    def stmt(self, s, d):
        if isinstance(s, A.Block):
            self.emit(d, "{")
            self.block_body(s, d + 1)
            self.emit(d, "}")
        elif isinstance(s, A.VarDecl):
            init = f" = {expr_str(s.init)}" if s.init is not None else ""
            self.emit(d, f"{type_str(s.ty)} {s.name}{init};")
        elif isinstance(s, A.Assign):
            tgt = s.target if isinstance(s.target, str) else expr_str(s.target)
            self.emit(d, f"{tgt} = {expr_str(s.expr)};")
        elif isinstance(s, A.FieldAssign):
            self.emit(d, f"{expr_str(s.obj, 8)}.{s.field} = {expr_str(s.expr)};")
        elif isinstance(s, A.AllocS):
            self.emit(d, f"{s.target} = alloc(struct {s.record});")
        elif isinstance(s, A.CallS):
            call = f"{s.name}({', '.join(expr_str(a) for a in s.args)})"
            self.emit(d, f"{s.target} = {call};" if s.target else f"{call};")
        elif isinstance(s, A.AssertS):
            self.emit(d, f"assert({expr_str(s.expr)});")
        elif isinstance(s, A.StaticAssert):
            self.emit(d, f"//@ assert {formula_str(s.formula)};")
        elif isinstance(s, (A.Fold, A.Unfold)):
            kw = "fold" if isinstance(s, A.Fold) else "unfold"
            self.emit(d, f"//@ {kw} acc({s.name}({', '.join(expr_str(a) for a in s.args)}));")
        elif isinstance(s, A.If):
            self.emit(d, f"if ({expr_str(s.cond)}) {{")
            self.block_body(s.then, d + 1)
            if s.other.stmts:
                self.emit(d, "} else {")
                self.block_body(s.other, d + 1)
            self.emit(d, "}")
        elif isinstance(s, A.While):
            self.emit(d, f"while ({expr_str(s.cond)})")
            self.emit(d + 1, f"//@ loop_invariant {formula_str(s.invariant)};")
            self.emit(d, "{")
            self.block_body(s.body, d + 1)
            self.emit(d, "}")
        elif isinstance(s, A.For):
            init = _simple(s.init) if s.init else ""
            step = _simple(s.step) if s.step else ""
            self.emit(d, f"for ({init}; {expr_str(s.cond)}; {step})")
            self.emit(d + 1, f"//@ loop_invariant {formula_str(s.invariant)};")
            self.emit(d, "{")
            self.block_body(s.body, d + 1)
            self.emit(d, "}")
        elif isinstance(s, A.Return):
            self.emit(d, "return;" if s.expr is None else f"return {expr_str(s.expr)};")
        else:
            raise TypeError(f"cannot print statement {type(s).__name__}")


def _simple(s):
    p = _Printer()
    p.stmt(s, 0)
    return p.lines[0].rstrip(";")


def stmt_str(s, depth=0):
    p = _Printer()
    p.stmt(s, depth)
    return "\n".join(p.lines)


def method_header(m):
    params = ", ".join(f"{type_str(t)} {n}" for n, t in m.params)
    if m.style == "method":
        ret = f" returns ({type_str(m.ret[1])} {m.ret[0]})" if m.ret else ""
        return f"method {m.name}({params}){ret}"
    rty = type_str(m.ret[1]) if m.ret else "void"
    return f"{rty} {m.name}({params})"


def print_program(prog):
    out = []
    for r in prog.records:
        out.append(f"struct {r.name} {{")
        for n, t in r.fields:
            out.append(f"  {type_str(t)} {n};")
        out.append("};")
        out.append("")
    for pd in prog.predicates:
        params = ", ".join(f"{type_str(t)} {n}" for n, t in pd.params)
        out.append(f"//@ predicate {pd.name}({params}) = {formula_str(pd.body)};")
    if prog.predicates:
        out.append("")
    for m in prog.methods:
        out.append(method_header(m))
        out.append(f"  //@ requires {formula_str(m.pre)};")
        out.append(f"  //@ ensures {formula_str(m.post)};")
        if m.body is None:
            out.append(";")
        else:
            p = _Printer()
            p.stmt(m.body, 0)
            out.extend(p.lines)
        out.append("")
    return "\n".join(out).rstrip() + "\n"
