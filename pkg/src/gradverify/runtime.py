"""Interpreter for core programs, including instrumented ones.

Instrumented programs call into a small run-time library (see
frontend/builtins.py): owned-field tables, access and formula assertions,
separation checks and footprint transfers. Every library operation is
counted so runs can be compared by the amount of checking they perform.
"""
import operator
import random
from ast import literal_eval
import re
from dataclasses import dataclass, field, fields as dc_fields

from .frontend import ast as A
from .engine import run_deep


class VerificationFailure(Exception):
    def __init__(self, check, message):
        super().__init__(message)
        self.check = check
        self.message = message


class RuntimeFault(Exception):
    def __init__(self, message, span=(0, 0)):
        super().__init__(message)
        self.message = message
        self.span = span


class Obj:
    __slots__ = ("record", "fields")

    def __init__(self, record, fields):
        self.record = record
        self.fields = fields

    @property
    def id(self):
        return self.fields.get("_id")

    def __repr__(self):
        return f"<{self.record.name} #{self.id}>"


class Counter:
    def __init__(self, start=0):
        self.value = start

    def next(self):
        v = self.value
        self.value += 1
        return v


class OwnedFields:
    """Set of owned (object id, field index) cells; tables created during
    one run share a single instance counter."""

    def __init__(self, counter):
        self.counter = counter
        self.cells = set()

    @property
    def inst_cntr(self):
        return self.counter.value

    def __contains__(self, cell):
        return cell in self.cells

    def __len__(self):
        return len(self.cells)


@dataclass
class Metrics:
    acc_asserts: int = 0
    formula_asserts: int = 0
    pred_calls: int = 0
    sep_inserts: int = 0
    transfers: int = 0
    allocations: int = 0

    @property
    def checks(self):
        """Executed dynamic checks: everything except bookkeeping transfers."""
        return self.acc_asserts + self.formula_asserts + self.pred_calls + self.sep_inserts

    def as_dict(self):
        d = {f.name: getattr(self, f.name) for f in dc_fields(self)}
        d["checks"] = self.checks
        return d


@dataclass
class RunReport:
    outcome: str  # completed | verification-failure | runtime-error
    metrics: Metrics = field(default_factory=Metrics)
    check: int = None
    message: str = ""
    location: str = ""
    result: object = None

    @property
    def ok(self):
        return self.outcome == "completed"

    def format(self):
        lines = ["gradverify-run 1", f"outcome {self.outcome}"]
        if self.result is not None:
            lines.append(f"result {fmt_value(self.result)}")
        if self.outcome != "completed":
            if self.check is not None:
                lines.append(f"check {self.check}")
            lines.append(f"message {self.message}")
            if self.location:
                lines.append(f"location {self.location}")
        for k, v in self.metrics.as_dict().items():
            lines.append(f"metric {k} {v}")
        return "\n".join(lines) + "\n"


def fmt_value(v):
    if v is None:
        return "null"
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


@dataclass
class Provenance:
    text: str
    location: str = ""
    kind: str = "check"  # check | access | predicate | transfer | separation


PROV_RE = re.compile(r"^// check (\d+) \[(\w+)\] (\S*) (.*)$")


def read_provenance(src):
    """Recover the provenance table from a printed instrumented program."""
    table = {}
    for line in src.splitlines():
        m = PROV_RE.match(line)
        if m:
            table[int(m.group(1))] = Provenance(m.group(4), m.group(3), m.group(2))
    return [table.get(i, Provenance("")) for i in range(max(table, default=-1) + 1)]


def _cdiv(a, b):
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b > 0) else -q


_ARITH = {
    "+": operator.add, "-": operator.sub, "*": operator.mul,
    "==": operator.eq, "!=": operator.ne, "<": operator.lt, "<=": operator.le,
    ">": operator.gt, ">=": operator.ge,
}


class Interpreter:
    """Executes programs by first compiling each method body into nested
    Python closures; a closure takes the variable environment (a dict)."""

    def __init__(self, prog, workload=0, seed=0, provenance=None, fuel=5_000_000):
        self.prog = prog
        self.methods = {m.name: m for m in prog.methods}
        self.records = {r.name: r for r in prog.records}
        self.workload = workload
        self.rng = random.Random(seed)
        self.provenance = provenance or []
        self.metrics = Metrics()
        self.counter = Counter(0)
        self.fuel = fuel
        self.depth = 0
        self.compiled = {}

    # -- failures
    def fail(self, k, detail):
        p = self.provenance[k] if 0 <= k < len(self.provenance) else Provenance(f"check {k}")
        msg = f"{p.text}: {detail}" if detail else p.text
        raise VerificationFailure(k, msg)

    def tick(self, span):
        self.fuel -= 1
        if self.fuel < 0:
            raise RuntimeFault("step limit exceeded", span)

    # -- compilation
    def cexpr(self, e):
        if isinstance(e, A.Lit):
            v = e.value
            if e.kind == "char" and isinstance(v, str):
                v = ord(literal_eval(v))
            return lambda env: v
        if isinstance(e, A.Var):
            name = e.name
            return lambda env: env[name]
        if isinstance(e, A.FieldAcc):
            obj, fname, span = self.cexpr(e.obj), e.field, e.span

            def read(env):
                o = obj(env)
                if o is None:
                    raise RuntimeFault(f"null dereference reading {fname}", span)
                return o.fields[fname]
            return read
        if isinstance(e, A.Unop):
            arg = self.cexpr(e.arg)
            if e.op == "!":
                return lambda env: not arg(env)
            return lambda env: -arg(env)
        if isinstance(e, A.Binop):
            left, right = self.cexpr(e.left), self.cexpr(e.right)
            if e.op == "&&":
                return lambda env: bool(left(env)) and bool(right(env))
            if e.op == "||":
                return lambda env: bool(left(env)) or bool(right(env))
            if e.op in ("/", "%"):
                span, is_div = e.span, e.op == "/"

                def divide(env):
                    a, b = left(env), right(env)
                    if b == 0:
                        raise RuntimeFault("division by zero", span)
                    q = _cdiv(a, b)
                    return q if is_div else a - q * b
                return divide
            fn = _ARITH[e.op]
            return lambda env: fn(left(env), right(env))
        if isinstance(e, A.Ternary):
            c, t, o = self.cexpr(e.cond), self.cexpr(e.then), self.cexpr(e.other)
            return lambda env: t(env) if c(env) else o(env)
        raise RuntimeFault(f"cannot evaluate {type(e).__name__}", getattr(e, "span", (0, 0)))

    def cblock(self, b):
        fns = [f for f in (self.cstmt(s) for s in b.stmts) if f is not None]
        if len(fns) == 1:
            return fns[0]

        def block(env):
            for f in fns:
                f(env)
        return block

    def cstmt(self, s):
        if isinstance(s, A.Block):
            return self.cblock(s)
        if isinstance(s, A.VarDecl):
            name = s.name
            if s.init is None:
                d = default(s.ty)

                def decl(env):
                    env[name] = d
                return decl
            init = self.cexpr(s.init)

            def decl_init(env):
                env[name] = init(env)
            return decl_init
        if isinstance(s, A.Assign):
            name, rhs = s.target, self.cexpr(s.expr)

            def assign(env):
                env[name] = rhs(env)
            return assign
        if isinstance(s, A.FieldAssign):
            obj, fname, rhs, span = self.cexpr(s.obj), s.field, self.cexpr(s.expr), s.span

            def write(env):
                o = obj(env)
                if o is None:
                    raise RuntimeFault(f"null dereference writing {fname}", span)
                o.fields[fname] = rhs(env)
            return write
        if isinstance(s, A.AllocS):
            rec, target = self.records[s.record], s.target
            init = [(f, default(t)) for f, t in rec.fields]
            metrics = self.metrics

            def alloc(env):
                metrics.allocations += 1
                env[target] = Obj(rec, dict(init))
            return alloc
        if isinstance(s, A.CallS):
            args = [self.cexpr(a) for a in s.args]
            name, target, span = s.name, s.target, s.span
            native = NATIVES.get(name)
            if native is not None:
                it = self
                if target is None:
                    return lambda env: native(it, *[a(env) for a in args])

                def do_native(env):
                    env[target] = native(it, *[a(env) for a in args])
                return do_native
            call = self.call

            def do_call(env):
                v = call(name, [a(env) for a in args], span)
                if target is not None:
                    env[target] = v
            return do_call
        if isinstance(s, A.AssertS):
            cond, text = self.cexpr(s.expr), _show(s.expr)

            def check(env):
                if not cond(env):
                    raise VerificationFailure(None, f"assert({text}) failed")
            return check
        if isinstance(s, A.If):
            cond, then, other = self.cexpr(s.cond), self.cblock(s.then), self.cblock(s.other)

            def branch(env):
                if cond(env):
                    then(env)
                else:
                    other(env)
            return branch
        if isinstance(s, A.While):
            cond, body, span = self.cexpr(s.cond), self.cblock(s.body), s.span
            tick = self.tick

            def loop(env):
                while cond(env):
                    tick(span)
                    body(env)
            return loop
        if isinstance(s, (A.Fold, A.Unfold, A.StaticAssert)):
            return None  # ghost statements have no run-time effect
        raise RuntimeFault(f"cannot execute {type(s).__name__}", s.span)

    def body_of(self, m):
        fn = self.compiled.get(m.name)
        if fn is None:
            fn = self.compiled[m.name] = self.cblock(m.body)
        return fn

    def call(self, name, args, span):
        native = NATIVES.get(name)
        if native is not None:
            return native(self, *args)
        m = self.methods.get(name)
        if m is None:
            raise RuntimeFault(f"unknown method {name}", span)
        if m.body is None:
            ext = EXTERNS.get(name)
            if ext is None:
                raise RuntimeFault(f"no implementation for {name}", span)
            return ext(self, *args)
        if name.startswith("_pred_"):
            self.metrics.pred_calls += 1
        env = {p: a for (p, _), a in zip(m.params, args)}
        if m.ret is not None:
            env[m.ret[0]] = default(m.ret[1])
        self.depth += 1
        if self.depth > 20000:
            raise RuntimeFault("call depth exceeded", span)
        self.tick(span)
        try:
            self.body_of(m)(env)
        finally:
            self.depth -= 1
        return env[m.ret[0]] if m.ret is not None else None

    # -- library
    def cell(self, o, idx, k, what):
        if o is None:
            self.fail(k, f"{what} on a field of null")
        if o.id is None:
            self.fail(k, f"{what} on an untracked object")
        return (o.id, idx)

    def add_struct_acc(self, of, o):
        oid = self.counter.next()
        o.fields["_id"] = oid
        for i in range(len(o.record.fields)):
            of.cells.add((oid, i))

    def assert_acc(self, of, o, idx, k):
        self.metrics.acc_asserts += 1
        c = self.cell(o, idx, k, "access check")
        if c not in of.cells:
            self.fail(k, f"field {o.record.fields[idx][0]} of object {o.id} is not owned")

    def sep_insert(self, tmp, o, idx, k):
        self.metrics.sep_inserts += 1
        c = self.cell(o, idx, k, "separation check")
        if c in tmp.cells:
            self.fail(k, f"field {o.record.fields[idx][0]} of object {o.id} is not separated")
        tmp.cells.add(c)

    def move_acc(self, src, dst, o, idx, k):
        """Move one cell; the object's `_id` cell travels with it."""
        c = self.cell(o, idx, k, "ownership transfer")
        if src is not None:
            if c not in src.cells:
                self.fail(k, f"field {o.record.fields[idx][0]} of object {o.id} is not owned")
            src.cells.discard(c)
        dst.cells.add(c)
        self.metrics.transfers += 1
        last = len(o.record.fields) - 1
        if o.record.fields[last][0] == "_id" and idx != last:
            ic = (o.id, last)
            if ic not in dst.cells and (src is None or ic in src.cells):
                if src is not None:
                    src.cells.discard(ic)
                dst.cells.add(ic)
                self.metrics.transfers += 1

    def join(self, dst, src):
        self.metrics.transfers += len(src.cells)
        dst.cells |= src.cells
        src.cells = set()

    def assert_check(self, b, k):
        self.metrics.formula_asserts += 1
        if not b:
            self.fail(k, "does not hold")


def _show(e):
    from .frontend.printer import expr_str
    return expr_str(e)


def default(ty):
    if ty is None:
        return None
    if ty.kind in ("int", "char"):
        return 0
    if ty.kind == "bool":
        return False
    return None


NATIVES = {
    "initOwnedFields": lambda it: OwnedFields(it.counter),
    "addStructAcc": lambda it, of, o: it.add_struct_acc(of, o),
    "assignId": lambda it, o: o.fields.__setitem__("_id", it.counter.next()),
    "assertAcc": lambda it, of, o, idx, k: it.assert_acc(of, o, idx, k),
    "sepAcc": lambda it, tmp, o, idx, k: it.sep_insert(tmp, o, idx, k),
    "moveAcc": lambda it, src, dst, o, idx, k: it.move_acc(src, dst, o, idx, k),
    "join": lambda it, dst, src: it.join(dst, src),
    "assertCheck": lambda it, b, k: it.assert_check(b, k),
}

EXTERNS = {
    "rand": lambda it, bound: it.rng.randrange(bound) if bound > 0 else 0,
    "workload": lambda it: it.workload,
}


def run(prog, workload=0, seed=0, provenance=None, fuel=5_000_000):
    """Execute `main` and report how the run ended."""
    it = Interpreter(prog, workload, seed, provenance, fuel)

    def go():
        try:
            res = it.call("main", [], (0, 0))
            return RunReport("completed", it.metrics, result=res)
        except VerificationFailure as exc:
            loc = ""
            if exc.check is not None and 0 <= exc.check < len(it.provenance):
                loc = it.provenance[exc.check].location
            return RunReport("verification-failure", it.metrics, exc.check, exc.message, loc)
        except RuntimeFault as exc:
            return RunReport("runtime-error", it.metrics, None, exc.message,
                             f"{prog.filename}:{exc.span[0]}:{exc.span[1]}")
    return run_deep(go)
