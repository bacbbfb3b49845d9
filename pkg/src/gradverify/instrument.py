"""Turn a verified program plus its check report into a runnable program.

Three modes share one code path:

* gradual: only the residual checks from the report, each placed at its
  site and guarded by the branch conditions recorded with it;
* dynamic: every contract, invariant, fold/unfold and field access is
  checked at run time;
* framing: only field accesses are checked.

Permissions are tracked with owned-field tables (`OwnedFields*`) that the
program passes around explicitly. Methods that need no checks at all and
only call such methods skip the table entirely; their callers transfer the
callee's static footprint out of and back into their own table.
"""
import re
from dataclasses import dataclass, field

from .frontend import ast as A
from .frontend.builtins import OWNED
from .frontend.parser import parse_formula
from .frontend.printer import expr_str, formula_str, print_program
from .engine import equi_imp
from .runtime import Provenance

MODES = ("gradual", "dynamic", "framing")
HEADER = "// gradverify-instrumented"
TABLE = "_ownedFields"


class InstrumentError(Exception):
    pass


# ------------------------------------------------------------- report parsing

@dataclass
class ReportBranch:
    location: str
    site: tuple
    positive: bool
    text: str

    @property
    def key(self):
        return (self.site, self.location, self.text)


@dataclass
class ReportCheck:
    id: int
    method: str
    location: str = ""
    site: tuple = ()
    origin: str = ""
    bcs: list = field(default_factory=list)
    formula: str = "true"
    needs_sep: bool = False


@dataclass
class CheckReport:
    file: str = ""
    verdict: str = "success"
    total: int = 0
    discharged: int = 0
    decls: list = field(default_factory=list)
    errors: list = field(default_factory=list)
    checks: list = field(default_factory=list)

    @property
    def ok(self):
        return self.verdict == "success"


def parse_site(text):
    """'@3:pre' -> (3, 'pre'); '@entry' -> (None, 'entry')."""
    body = text[1:]
    if ":" in body:
        idx, phase = body.split(":", 1)
        return (int(idx), phase)
    return (None, body)


BC_RE = re.compile(r"^bc (\S+) (@\S+) (true|false): (.*)$")


def parse_report(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "gradverify-checks 1":
        raise InstrumentError("not a check report")
    rep = CheckReport()
    cur = None
    for raw in lines[1:]:
        line = raw.strip()
        if not line:
            continue
        word, _, rest = line.partition(" ")
        if cur is not None:
            if word == "end":
                rep.checks.append(cur)
                cur = None
            elif word == "method":
                cur.method = rest
            elif word == "location":
                cur.location = rest
            elif word == "site":
                cur.site = parse_site(rest)
            elif word == "origin":
                cur.origin = rest
            elif word == "bc":
                m = BC_RE.match(line)
                if not m:
                    raise InstrumentError(f"bad branch condition line: {line}")
                cur.bcs.append(ReportBranch(m.group(1), parse_site(m.group(2)),
                                            m.group(3) == "true", m.group(4)))
            elif word == "formula":
                cur.formula = rest
            elif word == "needsSeparation":
                cur.needs_sep = rest == "true"
            else:
                raise InstrumentError(f"unexpected line in check: {line}")
        elif word == "file":
            rep.file = rest
        elif word == "verdict":
            rep.verdict = rest
        elif word == "obligations":
            a, b = rest.split()
            rep.total, rep.discharged = int(a), int(b)
        elif word == "decl":
            kind, name, res = rest.split()
            rep.decls.append((kind, name, res == "success"))
        elif word == "error":
            rep.errors.append(rest)
        elif word == "check":
            cur = ReportCheck(int(rest), "")
        else:
            raise InstrumentError(f"unexpected line: {line}")
    if cur is not None:
        raise InstrumentError("unterminated check")
    return rep


# ------------------------------------------------------------------ helpers

def _lit(n):
    return A.Lit("int", n)


def _var(name):
    return A.Var(name)


def _call(name, args, target=None, span=None):
    return A.CallS(target, name, args, span)


def subst(e, mapping):
    """Copy of expression e with variables renamed per mapping."""
    if isinstance(e, A.Var):
        return A.Var(mapping.get(e.name, e.name), e.span)
    if isinstance(e, A.Lit):
        return A.Lit(e.kind, e.value, e.span)
    if isinstance(e, A.FieldAcc):
        return A.FieldAcc(subst(e.obj, mapping), e.field, e.span)
    if isinstance(e, A.Unop):
        return A.Unop(e.op, subst(e.arg, mapping), e.span)
    if isinstance(e, A.Binop):
        return A.Binop(e.op, subst(e.left, mapping), subst(e.right, mapping), e.span)
    if isinstance(e, A.Ternary):
        return A.Ternary(subst(e.cond, mapping), subst(e.then, mapping),
                         subst(e.other, mapping), e.span)
    raise InstrumentError(f"cannot copy {type(e).__name__}")


def subst_formula(phi, mapping):
    if isinstance(phi, A.FExpr):
        return A.FExpr(subst(phi.expr, mapping), phi.span)
    if isinstance(phi, A.FAcc):
        return A.FAcc(subst(phi.target, mapping), phi.span)
    if isinstance(phi, A.FPred):
        return A.FPred(phi.name, [subst(a, mapping) for a in phi.args], phi.span)
    if isinstance(phi, A.FSep):
        return A.FSep(subst_formula(phi.left, mapping), subst_formula(phi.right, mapping),
                      phi.span)
    if isinstance(phi, A.FCond):
        return A.FCond(subst(phi.cond, mapping), subst_formula(phi.then, mapping),
                       subst_formula(phi.other, mapping), phi.span)
    if isinstance(phi, A.FImp):
        return A.FImp(subst_formula(phi.body, mapping), phi.span)
    raise InstrumentError(f"cannot copy {type(phi).__name__}")


def method_env(m):
    env = {n: t for n, t in m.params}
    if m.ret is not None:
        env[m.ret[0]] = m.ret[1]
    if m.body is not None:
        for s in A.walk_stmts(m.body):
            if isinstance(s, A.VarDecl):
                env.setdefault(s.name, s.ty)
    return env


def needs_separation(phi):
    parts = [c for c in A.walk_formula(A.static_part(phi)) if isinstance(c, (A.FAcc, A.FPred))]
    return len(parts) > 1 or any(isinstance(c, A.FPred) for c in parts)


def calls_in(body):
    return [s for s in A.walk_stmts(body) if isinstance(s, A.CallS)]


def fully_precise_methods(prog, report):
    """Methods that can run without an owned-field table: precise
    contracts and invariants, no residual checks, and only such callees."""
    with_checks = {c.method for c in report.checks}
    cand = set()
    for m in prog.methods:
        if m.body is None or m.name == "main" or m.name in with_checks:
            continue
        if equi_imp(prog, m.pre) or equi_imp(prog, m.post):
            continue
        if any(isinstance(s, A.While) and equi_imp(prog, s.invariant)
               for s in A.walk_stmts(m.body)):
            continue
        cand.add(m.name)
    changed = True
    while changed:
        changed = False
        for name in sorted(cand):
            m = prog.method(name)
            for c in calls_in(m.body):
                if not prog.has_method(c.name):
                    continue
                callee = prog.method(c.name)
                if callee.body is not None and callee.name not in cand:
                    cand.discard(name)
                    changed = True
                    break
    return cand


# ---------------------------------------------------------------- instrument

@dataclass
class Instrumented:
    program: A.Program
    provenance: list
    mode: str
    sites: int = 0  # residual checks placed (gradual mode)
    check_ids: dict = field(default_factory=dict)  # report check id -> provenance ids
    tracking: set = field(default_factory=set)

    @property
    def static_checks(self):
        """Number of inserted check operations (not counting transfers)."""
        return sum(1 for p in self.provenance if p.kind != "transfer")

    def source(self):
        lines = [f"{HEADER} mode={self.mode}"]
        for i, p in enumerate(self.provenance):
            lines.append(f"// check {i} [{p.kind}] {p.location or '-'} {p.text}")
        return "\n".join(lines) + "\n\n" + print_program(self.program)


class Instrumenter:
    def __init__(self, prog, report, mode="gradual"):
        if mode not in MODES:
            raise InstrumentError(f"unknown mode {mode}")
        if mode == "gradual" and not report.ok:
            raise InstrumentError("cannot instrument a program that failed verification")
        self.prog = prog
        self.report = report
        self.mode = mode
        self.fname = prog.filename
        self.prov = []
        self.records = {r.name: r for r in prog.records}
        self.generated = {}  # name -> MethodDecl
        self.pending = []
        if mode == "gradual":
            self.untracked = fully_precise_methods(prog, report)
        else:
            self.untracked = set()
        self.check_ids = {}
        self.sites = 0

    # -- bookkeeping
    def new_id(self, text, location, kind):
        self.prov.append(Provenance(text, location, kind))
        return len(self.prov) - 1

    def loc(self, span):
        return f"{self.fname}:{span[0]}:{span[1]}"

    def tracks(self, name):
        m = self.prog.method(name)
        return m.body is not None and name not in self.untracked

    # -- types
    def type_of(self, e, env):
        if isinstance(e, A.Lit):
            return {"int": A.INT, "bool": A.BOOL, "char": A.CHAR, "null": A.NULLT}[e.kind]
        if isinstance(e, A.Var):
            if e.name not in env:
                raise InstrumentError(f"unknown variable {e.name} in check")
            return env[e.name]
        if isinstance(e, A.FieldAcc):
            rec = self.record_of(e.obj, env)
            return rec.field_type(e.field)
        if isinstance(e, A.Unop):
            return A.BOOL if e.op == "!" else A.INT
        if isinstance(e, A.Binop):
            return A.INT if e.op in ("+", "-", "*", "/", "%") else A.BOOL
        if isinstance(e, A.Ternary):
            return self.type_of(e.then, env)
        raise InstrumentError(f"cannot type {type(e).__name__}")

    def record_of(self, e, env):
        t = self.type_of(e, env)
        if t.kind != "ref" or t.record not in self.records:
            raise InstrumentError(f"{expr_str(e)} is not a record reference")
        return self.records[t.record]

    def field_index(self, fa, env):
        return self.record_of(fa.obj, env).field_index(fa.field)

    # -- formula encodings
    def assert_stmts(self, phi, env, table, label, location, kind="check"):
        """Statements checking phi against `table`; one id per atom."""
        if isinstance(phi, A.FImp):
            return self.assert_stmts(phi.body, env, table, label, location, kind)
        if isinstance(phi, A.FSep):
            return (self.assert_stmts(phi.left, env, table, label, location, kind)
                    + self.assert_stmts(phi.right, env, table, label, location, kind))
        if isinstance(phi, A.FCond):
            return [A.If(phi.cond,
                         A.Block(self.assert_stmts(phi.then, env, table, label, location, kind)),
                         A.Block(self.assert_stmts(phi.other, env, table, label, location, kind)))]
        text = formula_str(phi) + label
        if isinstance(phi, A.FExpr):
            if isinstance(phi.expr, A.Lit) and phi.expr.value is True:
                return []
            k = self.new_id(text, location, kind)
            return [_call("assertCheck", [phi.expr, _lit(k)])]
        if isinstance(phi, A.FAcc):
            k = self.new_id(text, location, kind)
            fa = phi.target
            return [_call("assertAcc", [_var(table), fa.obj, _lit(self.field_index(fa, env)),
                                        _lit(k)])]
        if isinstance(phi, A.FPred):
            self.want(phi.name, "pred")
            self.new_id(text, location, kind)
            return [_call(f"_pred_{phi.name}", list(phi.args) + [_var(table)])]
        raise InstrumentError(f"cannot check {type(phi).__name__}")

    def sep_stmts(self, phi, env, tmp, label, location):
        if isinstance(phi, A.FImp):
            return self.sep_stmts(phi.body, env, tmp, label, location)
        if isinstance(phi, A.FSep):
            return (self.sep_stmts(phi.left, env, tmp, label, location)
                    + self.sep_stmts(phi.right, env, tmp, label, location))
        if isinstance(phi, A.FCond):
            return [A.If(phi.cond, A.Block(self.sep_stmts(phi.then, env, tmp, label, location)),
                         A.Block(self.sep_stmts(phi.other, env, tmp, label, location)))]
        if isinstance(phi, A.FAcc):
            k = self.new_id(f"separation of {formula_str(phi)}{label}", location, "separation")
            fa = phi.target
            return [_call("sepAcc", [_var(tmp), fa.obj, _lit(self.field_index(fa, env)), _lit(k)])]
        if isinstance(phi, A.FPred):
            self.want(phi.name, "sep")
            return [_call(f"_sep_{phi.name}", list(phi.args) + [_var(tmp)])]
        return []

    def move_stmts(self, phi, env, src, dst, label, location):
        if isinstance(phi, A.FImp):
            return self.move_stmts(phi.body, env, src, dst, label, location)
        if isinstance(phi, A.FSep):
            return (self.move_stmts(phi.left, env, src, dst, label, location)
                    + self.move_stmts(phi.right, env, src, dst, label, location))
        if isinstance(phi, A.FCond):
            return [A.If(phi.cond,
                         A.Block(self.move_stmts(phi.then, env, src, dst, label, location)),
                         A.Block(self.move_stmts(phi.other, env, src, dst, label, location)))]
        if isinstance(phi, A.FAcc):
            k = self.new_id(f"transfer of {formula_str(phi)}{label}", location, "transfer")
            fa = phi.target
            return [_call("moveAcc", [src, dst, fa.obj, _lit(self.field_index(fa, env)),
                                      _lit(k)])]
        if isinstance(phi, A.FPred):
            self.want(phi.name, "fp")
            return [_call(f"_fp_{phi.name}", list(phi.args) + [src, dst])]
        return []

    # -- generated support methods
    def want(self, pred, kind):
        name = f"_{kind}_{pred}"
        if name not in self.generated:
            self.generated[name] = None
            self.pending.append((kind, pred))

    def build_support(self):
        while self.pending:
            kind, pname = self.pending.pop(0)
            pd = self.prog.predicate(pname)
            env = dict(pd.params)
            body = A.static_part(pd.body)
            loc = self.loc(pd.span)
            label = f" in predicate {pname}"
            if kind == "pred":
                extra = [(TABLE, OWNED)]
                stmts = self.assert_stmts(body, env, TABLE, label, loc, "predicate")
            elif kind == "sep":
                extra = [("_tmp", OWNED)]
                stmts = self.sep_stmts(body, env, "_tmp", label, loc)
            else:
                extra = [("_src", OWNED), ("_dst", OWNED)]
                stmts = self.move_stmts(body, env, _var("_src"), _var("_dst"), label, loc)
            name = f"_{kind}_{pname}"
            self.generated[name] = A.MethodDecl(name, list(pd.params) + extra, None,
                                                A.ftrue(), A.ftrue(), A.Block(stmts))

    def footprint_method(self, m, which):
        """`_fp_pre_M(params, src, dst)` or `_fp_post_M(params, ret, src, dst)`."""
        name = f"_fp_{which}_{m.name}"
        if name in self.generated:
            return name
        params = list(m.params)
        mapping = {}
        phi = m.pre if which == "pre" else m.post
        if which == "post" and m.ret is not None:
            rname = m.ret[0]
            if rname == A.RESULT:
                mapping[rname] = "_tmpResult"
                rname = "_tmpResult"
            params.append((rname, m.ret[1]))
        phi = subst_formula(phi, mapping)
        env = dict(params)
        label = f" in {'precondition' if which == 'pre' else 'postcondition'} of {m.name}"
        stmts = self.move_stmts(phi, env, _var("_src"), _var("_dst"), label, self.loc(m.span))
        self.generated[name] = A.MethodDecl(name, params + [("_src", OWNED), ("_dst", OWNED)],
                                            None, A.ftrue(), A.ftrue(), A.Block(stmts))
        return name

    # -- per method
    def run(self):
        prog = self.prog
        by_method = {}
        for c in self.report.checks:
            by_method.setdefault(c.method, []).append(c)
        methods = []
        for m in prog.methods:
            if m.body is None:
                methods.append(m)
                continue
            mi = MethodInstrumenter(self, m, by_method.get(m.name, []) if self.mode == "gradual"
                                    else [])
            methods.append(mi.run())
        self.build_support()
        records = [A.RecordDecl(r.name, list(r.fields) + [("_id", A.INT)], r.span)
                   for r in prog.records]
        out = A.Program(records, list(prog.predicates), methods + list(self.generated.values()),
                        prog.filename)
        tracking = {m.name for m in prog.methods if m.body is not None
                    and m.name not in self.untracked}
        return Instrumented(out, self.prov, self.mode, self.sites, self.check_ids, tracking)


class MethodInstrumenter:
    def __init__(self, top, m, checks):
        self.top = top
        self.m = m
        self.env = method_env(m)
        self.tracks = m.name == "main" or top.tracks(m.name)
        self.stmts = list(A.walk_stmts(m.body))
        self.ops = {}  # site key -> list of ("check", c) / ("cond", bc)
        self.conds = {}  # bc key -> variable name
        self.emitted = set()
        self.decls = []
        self.ntmp = 0
        for c in checks:
            self.ops.setdefault(self.site_key(c.site), []).append(("check", c))
            for bc in c.bcs:
                if bc.key not in self.conds:
                    self.conds[bc.key] = f"_cond_{len(self.conds) + 1}"
                    self.env[self.conds[bc.key]] = A.BOOL
                    self.decls.append(A.VarDecl(self.conds[bc.key], A.BOOL, A.Lit("bool", False)))
                    self.ops.setdefault(self.site_key(bc.site), []).append(("cond", bc))

    @property
    def mode(self):
        return self.top.mode

    def site_key(self, site):
        idx, phase = site
        if idx is None:
            return (phase,)
        if idx >= len(self.stmts):
            raise InstrumentError(f"site index {idx} out of range in {self.m.name}")
        return (self.stmts[idx].nid, phase)

    def tmp(self, ty=OWNED):
        self.ntmp += 1
        name = f"_tmp{self.ntmp}"
        init = A.Lit("null", None) if ty.kind == "ref" else None
        self.decls.append(A.VarDecl(name, ty, init))
        self.env[name] = ty
        return name

    # -- residual checks
    def site_ops(self, key):
        out = []
        ops = self.ops.get(key, [])
        here = [bc for kind, bc in ops if kind == "cond"]
        keys = {bc.key for bc in here}
        for kind, item in ops:
            if kind != "check":
                continue
            for bc in item.bcs:
                if bc.key in keys:
                    out.extend(self.set_cond(bc))
            out.extend(self.residual(item))
        for bc in here:
            out.extend(self.set_cond(bc))
        return out

    def set_cond(self, bc):
        if bc.key in self.emitted:
            return []
        self.emitted.add(bc.key)
        e = parse_formula(bc.text)
        if not isinstance(e, A.FExpr):
            raise InstrumentError(f"branch condition is not an expression: {bc.text}")
        return [A.Assign(self.conds[bc.key], e.expr)]

    def residual(self, c):
        top = self.top
        phi = parse_formula(c.formula)
        first = len(top.prov)
        body = top.assert_stmts(phi, self.env, TABLE, "", c.location)
        if c.needs_sep:
            t = self.tmp()
            body += [_call("initOwnedFields", [], t)]
            body += top.sep_stmts(phi, self.env, t, "", c.location)
        top.check_ids[c.id] = list(range(first, len(top.prov)))
        top.sites += 1
        guard = None
        for bc in c.bcs:
            g = _var(self.conds[bc.key])
            if not bc.positive:
                g = A.Unop("!", g)
            guard = g if guard is None else A.Binop("&&", guard, g)
        if guard is None:
            return body
        return [A.If(guard, A.Block(body), A.Block([]))]

    # -- run-time verification of whole formulas (dynamic mode)
    def full_check(self, phi, label, span):
        if self.mode != "dynamic":
            return []
        loc = self.top.loc(span)
        out = self.top.assert_stmts(phi, self.env, TABLE, label, loc)
        if needs_separation(phi):
            t = self.tmp()
            out.append(_call("initOwnedFields", [], t))
            out += self.top.sep_stmts(phi, self.env, t, label, loc)
        return out

    def access(self, e, span):
        """Access checks for the field reads in e, respecting short circuits."""
        if self.mode == "gradual" or not self.tracks:
            return []
        if isinstance(e, A.FieldAcc):
            k = self.top.new_id(f"acc({expr_str(e)})", self.top.loc(span), "access")
            return self.access(e.obj, span) + [
                _call("assertAcc", [_var(TABLE), e.obj,
                                    _lit(self.top.field_index(e, self.env)), _lit(k)])]
        if isinstance(e, A.Unop):
            return self.access(e.arg, span)
        if isinstance(e, A.Binop):
            left = self.access(e.left, span)
            right = self.access(e.right, span)
            if right and e.op in ("&&", "||"):
                cond = e.left if e.op == "&&" else A.Unop("!", e.left)
                return left + [A.If(cond, A.Block(right), A.Block([]))]
            return left + right
        if isinstance(e, A.Ternary):
            return self.access(e.cond, span) + [
                A.If(e.cond, A.Block(self.access(e.then, span)),
                     A.Block(self.access(e.other, span)))]
        return []

    def write_access(self, s):
        if self.mode == "gradual" or not self.tracks:
            return []
        fa = A.FieldAcc(s.obj, s.field)
        k = self.top.new_id(f"acc({expr_str(fa)})", self.top.loc(s.span), "access")
        return [_call("assertAcc", [_var(TABLE), s.obj,
                                    _lit(self.top.field_index(fa, self.env)), _lit(k)])]

    # -- statements
    def block(self, b, head=(), tail=()):
        out = list(head)
        for s in b.stmts:
            out.extend(self.stmt(s))
        out.extend(tail)
        return A.Block(out, b.span)

    def stmt(self, s):
        out = self.site_ops((s.nid, "pre"))
        if isinstance(s, A.VarDecl):
            if s.init is not None:
                out += self.access(s.init, s.span)
            out.append(s)
        elif isinstance(s, A.Assign):
            out += self.access(s.expr, s.span)
            out.append(s)
        elif isinstance(s, A.FieldAssign):
            out += self.access(s.obj, s.span) + self.access(s.expr, s.span)
            out += self.write_access(s)
            out.append(s)
        elif isinstance(s, A.AllocS):
            out.append(s)
            if self.tracks:
                out.append(_call("addStructAcc", [_var(TABLE), _var(s.target)]))
            else:
                out.append(_call("assignId", [_var(s.target)]))
        elif isinstance(s, A.CallS):
            for a in s.args:
                out += self.access(a, s.span)
            out += self.call(s)
        elif isinstance(s, A.AssertS):
            out += self.access(s.expr, s.span)
            out.append(s)
        elif isinstance(s, A.StaticAssert):
            out += self.full_check(s.formula, " in assertion", s.span)
        elif isinstance(s, (A.Fold, A.Unfold)):
            what = "fold" if isinstance(s, A.Fold) else "unfold"
            out += self.full_check(A.FPred(s.name, s.args, s.span), f" at {what}", s.span)
        elif isinstance(s, A.If):
            out += self.access(s.cond, s.span)
            out.append(A.If(s.cond, self.block(s.then), self.block(s.other), s.span))
        elif isinstance(s, A.While):
            out += self.site_ops((s.nid, "before"))
            inv = self.full_check(s.invariant, " in loop invariant", s.span)
            out += inv
            out += self.access(s.cond, s.span)
            head = self.site_ops((s.nid, "beginning"))
            tail = self.site_ops((s.nid, "end"))
            tail += self.full_check(s.invariant, " in loop invariant", s.span)
            tail += self.access(s.cond, s.span)
            out.append(A.While(s.cond, A.ftrue(), self.block(s.body, head, tail), s.span))
            out += self.site_ops((s.nid, "after"))
        elif isinstance(s, A.Block):
            out.append(self.block(s))
        else:
            raise InstrumentError(f"unexpected statement {type(s).__name__}")
        return out

    def call(self, s):
        prog = self.top.prog
        post_ops = self.site_ops((s.nid, "post"))
        if not prog.has_method(s.name):
            return [s] + post_ops
        callee = prog.method(s.name)
        if callee.body is None or not self.tracks:
            return [s] + post_ops
        out = []
        args = list(s.args)
        target = s.target
        callee_tracks = self.top.tracks(callee.name)
        pass_all = callee_tracks and equi_imp(prog, callee.pre)
        if pass_all:
            return [A.CallS(target, s.name, args + [_var(TABLE)], s.span)] + post_ops
        # save arguments so the post footprint sees the values passed in
        saved = []
        for a in args:
            if isinstance(a, A.Lit):
                saved.append(a)
                continue
            t = self.tmp(self.top.type_of(a, self.env))
            out.append(A.Assign(t, a))
            saved.append(_var(t))
        if callee.ret is not None and target is None:
            target = self.tmp(callee.ret[1])
        pre_fp = self.top.footprint_method(callee, "pre")
        callee_table = self.tmp()
        out.append(_call("initOwnedFields", [], callee_table))
        out.append(_call(pre_fp, saved + [_var(TABLE), _var(callee_table)]))
        if callee_tracks:
            out.append(A.CallS(target, s.name, saved + [_var(callee_table)], s.span))
        else:
            out.append(A.CallS(target, s.name, saved, s.span))
        ret = [_var(target)] if callee.ret is not None else []
        if callee_tracks and equi_imp(prog, callee.post):
            out.append(_call("join", [_var(TABLE), _var(callee_table)]))
        else:
            post_fp = self.top.footprint_method(callee, "post")
            src = _var(callee_table) if callee_tracks else A.Lit("null", None)
            out.append(_call(post_fp, saved + ret + [src, _var(TABLE)]))
        return out + post_ops

    def run(self):
        m = self.m
        head = self.site_ops(("entry",))
        head += self.full_check(m.pre, f" in precondition of {m.name}", m.span)
        tail = self.site_ops(("exit",))
        tail += self.full_check(m.post, f" in postcondition of {m.name}", m.span)
        body = self.block(m.body, head, tail)
        missing = [k for k in self.ops if k not in self.visited_keys()]
        if missing:
            raise InstrumentError(f"checks at unknown sites in {m.name}: {missing}")
        prefix = list(self.decls)
        params = list(m.params)
        if m.name == "main":
            prefix.insert(0, A.VarDecl(TABLE, OWNED, None))
            prefix.insert(1, _call("initOwnedFields", [], TABLE))
        elif self.tracks:
            params.append((TABLE, OWNED))
        body = A.Block(prefix + body.stmts, body.span)
        return A.MethodDecl(m.name, params, m.ret, A.ftrue(), A.ftrue(), body, m.span,
                            m.style, dict(m.extra))

    def visited_keys(self):
        keys = {("entry",), ("exit",)}
        for s in self.stmts:
            keys.add((s.nid, "pre"))
            if isinstance(s, A.CallS):
                keys.add((s.nid, "post"))
            if isinstance(s, A.While):
                keys.update((s.nid, p) for p in ("before", "beginning", "end", "after"))
        return keys


def instrument(prog, report, mode="gradual"):
    """Instrument a lowered program. `report` is a CheckReport or its text."""
    if isinstance(report, str):
        report = parse_report(report)
    return Instrumenter(prog, report, mode).run()
