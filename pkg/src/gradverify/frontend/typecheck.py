"""Type checker: annotates every expression with its Type."""
from . import ast as A
from .builtins import BUILTINS, BUILTIN_RECORDS


class TypeCheckError(Exception):
    def __init__(self, msg, span=(0, 0), filename="<input>"):
        super().__init__(f"{filename}:{span[0]}:{span[1]}: {msg}")
        self.msg = msg
        self.span = span


ARITH = {"+", "-", "*", "/", "%"}
REL = {"<", "<=", ">", ">="}
EQ = {"==", "!="}
LOGIC = {"&&", "||"}


def assignable(dst, src):
    if dst == src:
        return True
    if dst.kind == "ref" and dst.record == "*":
        return src.kind in ("ref", "null")
    return dst.kind == "ref" and src.kind == "null"


def compatible(a, b):
    return assignable(a, b) or assignable(b, a) or (a.kind == "null" and b.kind == "null")


class Scope:
    def __init__(self):
        self.frames = [{}]

    def push(self):
        self.frames.append({})

    def pop(self):
        self.frames.pop()

    def lookup(self, name):
        for f in reversed(self.frames):
            if name in f:
                return f[name]
        return None

    def declare(self, name, ty, span, err):
        if self.lookup(name) is not None:
            err(f"variable {name!r} is already declared", span)
        self.frames[-1][name] = ty


class Checker:
    def __init__(self, prog, require_main=False):
        self.prog = prog
        self.require_main = require_main
        self.records = {r.name: r for r in prog.records}
        self.preds = {p.name: p for p in prog.predicates}
        self.methods = {m.name: m for m in prog.methods}
        self.method = None

    def err(self, msg, span=(0, 0)):
        raise TypeCheckError(msg, span, self.prog.filename)

    def check_type(self, t, span):
        if t.kind == "ref" and t.record not in self.records and t.record not in BUILTIN_RECORDS:
            self.err(f"unknown record {t.record!r}", span)

    def run(self):
        p = self.prog
        for name in set(self.preds) & set(self.methods):
            self.err(f"name {name!r} declared as both predicate and method")
        for r in p.records:
            for _, t in r.fields:
                self.check_type(t, r.span)
        for pd in p.predicates:
            sc = Scope()
            for n, t in pd.params:
                self.check_type(t, pd.span)
                sc.declare(n, t, pd.span, self.err)
            self.formula(pd.body, sc)
        for m in p.methods:
            self.check_method(m)
        if self.require_main:
            mains = [m for m in p.methods if m.name == "main"]
            if len(mains) != 1 or mains[0].params:
                self.err("program needs exactly one parameterless method 'main'")
        return p

    def check_method(self, m):
        self.method = m
        sc = Scope()
        for n, t in m.params:
            self.check_type(t, m.span)
            sc.declare(n, t, m.span, self.err)
        self.formula(m.pre, sc)
        sc.push()
        if m.ret:
            self.check_type(m.ret[1], m.span)
            sc.declare(m.ret[0], m.ret[1], m.span, self.err)
        self.formula(m.post, sc)
        if m.body is not None:
            self.block(m.body, sc)
            self.check_returns(m.body, True)
        self.method = None

    def check_returns(self, b, tail):
        for i, s in enumerate(b.stmts):
            last = tail and i == len(b.stmts) - 1
            if isinstance(s, A.Return) and not last:
                self.err("return is only supported in tail position", s.span)
            if isinstance(s, A.If):
                self.check_returns(s.then, last)
                self.check_returns(s.other, last)
            elif isinstance(s, A.Block):
                self.check_returns(s, last)
            elif isinstance(s, (A.While, A.For)):
                self.check_returns(s.body, False)

    # -- formulas
    def formula(self, phi, sc):
        if isinstance(phi, A.FImp):
            self.formula(phi.body, sc)
        elif isinstance(phi, A.FSep):
            self.formula(phi.left, sc)
            self.formula(phi.right, sc)
        elif isinstance(phi, A.FExpr):
            t = self.expr(phi.expr, sc, spec=True)
            if t != A.BOOL:
                self.err(f"formula must be boolean, found {t}", phi.span)
        elif isinstance(phi, A.FAcc):
            if not isinstance(phi.target, A.FieldAcc):
                self.err("acc requires a field access", phi.span)
            self.expr(phi.target, sc, spec=True)
        elif isinstance(phi, A.FPred):
            self.pred_instance(phi.name, phi.args, sc, phi.span)
        elif isinstance(phi, A.FCond):
            if self.expr(phi.cond, sc, spec=True) != A.BOOL:
                self.err("condition must be boolean", phi.span)
            self.formula(phi.then, sc)
            self.formula(phi.other, sc)
        else:
            self.err(f"unexpected formula {type(phi).__name__}")

    def pred_instance(self, name, args, sc, span):
        pd = self.preds.get(name)
        if pd is None:
            self.err(f"unknown predicate {name!r}", span)
        if len(args) != len(pd.params):
            self.err(f"predicate {name} expects {len(pd.params)} arguments", span)
        for a, (_, t) in zip(args, pd.params):
            at = self.expr(a, sc, spec=True)
            if not assignable(t, at):
                self.err(f"argument type mismatch: expected {t}, found {at}", a.span)

    # -- expressions
    def expr(self, e, sc, spec=False):
        t = self._expr(e, sc, spec)
        e.ty = t
        return t

    def _expr(self, e, sc, spec):
        if isinstance(e, A.Lit):
            return {"int": A.INT, "bool": A.BOOL, "null": A.NULLT, "char": A.CHAR}[e.kind]
        if isinstance(e, A.Var):
            t = sc.lookup(e.name)
            if t is None:
                self.err(f"unknown identifier {e.name!r}", e.span)
            return t
        if isinstance(e, A.FieldAcc):
            ot = self.expr(e.obj, sc, spec)
            if ot.kind != "ref":
                self.err(f"field access on non-reference type {ot}", e.span)
            rec = self.records[ot.record]
            if e.field not in {f for f, _ in rec.fields}:
                self.err(f"record {rec.name} has no field {e.field!r}", e.span)
            return rec.field_type(e.field)
        if isinstance(e, A.Unop):
            t = self.expr(e.arg, sc, spec)
            want = A.BOOL if e.op == "!" else A.INT
            if t != want:
                self.err(f"type mismatch: {e.op} expects {want}, found {t}", e.span)
            return want
        if isinstance(e, A.Binop):
            lt = self.expr(e.left, sc, spec)
            rt = self.expr(e.right, sc, spec)
            if e.op in ARITH:
                if lt != A.INT or rt != A.INT:
                    self.err(f"type mismatch: {e.op} expects int operands, found {lt} and {rt}", e.span)
                return A.INT
            if e.op in REL:
                if lt != rt or lt not in (A.INT, A.CHAR):
                    self.err(f"type mismatch: {e.op} expects int operands, found {lt} and {rt}", e.span)
                return A.BOOL
            if e.op in EQ:
                if not compatible(lt, rt):
                    self.err(f"type mismatch: cannot compare {lt} and {rt}", e.span)
                return A.BOOL
            if e.op in LOGIC:
                if lt != A.BOOL or rt != A.BOOL:
                    self.err(f"type mismatch: {e.op} expects bool operands, found {lt} and {rt}", e.span)
                return A.BOOL
            self.err(f"unknown operator {e.op}", e.span)
        if isinstance(e, A.Ternary):
            if self.expr(e.cond, sc, spec) != A.BOOL:
                self.err("condition must be boolean", e.span)
            a = self.expr(e.then, sc, spec)
            b = self.expr(e.other, sc, spec)
            if not compatible(a, b):
                self.err(f"type mismatch: branches have types {a} and {b}", e.span)
            return b if a.kind == "null" else a
        if isinstance(e, A.CallE):
            if spec:
                self.err("method calls are not allowed in specifications", e.span)
            return self.call(e.name, e.args, sc, e.span, want_value=True)
        if isinstance(e, A.AllocE):
            if e.record not in self.records:
                self.err(f"unknown record {e.record!r}", e.span)
            return A.ref(e.record)
        self.err(f"unexpected expression {type(e).__name__}", e.span)

    def call(self, name, args, sc, span, want_value=False):
        m = self.methods.get(name)
        if m is None and name in BUILTINS:
            ptys, rty = BUILTINS[name]
            m = A.MethodDecl(name, [(f"a{i}", t) for i, t in enumerate(ptys)],
                             None if rty is None else ("r", rty), None, None, None)
        if m is None:
            self.err(f"unknown method {name!r}", span)
        if len(args) != len(m.params):
            self.err(f"method {name} expects {len(m.params)} arguments", span)
        for a, (_, t) in zip(args, m.params):
            at = self.expr(a, sc)
            if not assignable(t, at):
                self.err(f"argument type mismatch: expected {t}, found {at}", a.span)
        if m.ret is None:
            if want_value:
                self.err(f"method {name} returns no value", span)
            return A.VOID
        return m.ret[1]

    # -- statements
    def block(self, b, sc):
        sc.push()
        for s in b.stmts:
            self.stmt(s, sc)
        sc.pop()

    def assign_to(self, name, t, sc, span):
        vt = sc.lookup(name)
        if vt is None:
            self.err(f"unknown identifier {name!r}", span)
        if not assignable(vt, t):
            self.err(f"type mismatch: cannot assign {t} to {vt}", span)

    def stmt(self, s, sc):
        if isinstance(s, A.Block):
            self.block(s, sc)
        elif isinstance(s, A.VarDecl):
            self.check_type(s.ty, s.span)
            if s.ty == A.VOID:
                self.err("variables cannot have type void", s.span)
            if s.init is not None:
                t = self.expr(s.init, sc)
                if not assignable(s.ty, t):
                    self.err(f"type mismatch: cannot assign {t} to {s.ty}", s.span)
            sc.declare(s.name, s.ty, s.span, self.err)
        elif isinstance(s, A.Assign):
            self.assign_to(s.target, self.expr(s.expr, sc), sc, s.span)
        elif isinstance(s, A.FieldAssign):
            ft = self.expr(A.FieldAcc(s.obj, s.field, s.span), sc)
            t = self.expr(s.expr, sc)
            if not assignable(ft, t):
                self.err(f"type mismatch: cannot assign {t} to {ft}", s.span)
        elif isinstance(s, A.AllocS):
            if s.record not in self.records:
                self.err(f"unknown record {s.record!r}", s.span)
            self.assign_to(s.target, A.ref(s.record), sc, s.span)
        elif isinstance(s, A.CallS):
            t = self.call(s.name, s.args, sc, s.span, want_value=s.target is not None)
            if s.target is not None:
                self.assign_to(s.target, t, sc, s.span)
        elif isinstance(s, A.AssertS):
            if self.expr(s.expr, sc) != A.BOOL:
                self.err("assert expects a boolean", s.span)
        elif isinstance(s, A.StaticAssert):
            self.formula(s.formula, sc)
        elif isinstance(s, (A.Fold, A.Unfold)):
            self.pred_instance(s.name, s.args, sc, s.span)
        elif isinstance(s, A.If):
            if self.expr(s.cond, sc) != A.BOOL:
                self.err("if condition must be boolean", s.span)
            self.block(s.then, sc)
            self.block(s.other, sc)
        elif isinstance(s, A.While):
            if self.expr(s.cond, sc) != A.BOOL:
                self.err("loop condition must be boolean", s.span)
            self.formula(s.invariant, sc)
            self.block(s.body, sc)
        elif isinstance(s, A.For):
            sc.push()
            if s.init is not None:
                self.stmt(s.init, sc)
            if self.expr(s.cond, sc) != A.BOOL:
                self.err("loop condition must be boolean", s.span)
            self.formula(s.invariant, sc)
            self.block(s.body, sc)
            if s.step is not None:
                self.stmt(s.step, sc)
            sc.pop()
        elif isinstance(s, A.Return):
            m = self.method
            if s.expr is None:
                if m.ret is not None:
                    self.err("missing return value", s.span)
            else:
                if m.ret is None:
                    self.err("void method returns a value", s.span)
                t = self.expr(s.expr, sc)
                if not assignable(m.ret[1], t):
                    self.err(f"type mismatch: cannot return {t} as {m.ret[1]}", s.span)
        else:
            self.err(f"unexpected statement {type(s).__name__}", s.span)


def type_check(prog, require_main=False):
    return Checker(prog, require_main).run()
