"""Symbolic execution engine for gradual verification.

Every operation is written in continuation-passing style: it receives the
current symbolic state and a continuation, and returns True when every
path through the continuation verifies. Run-time checks are collected on
the state while a path runs and moved into the global check table when
the path reaches the end of its method.
"""
import sys
import threading
from collections import OrderedDict
from dataclasses import dataclass, field, replace

from . import state as S
from .frontend import ast as A
from .frontend.printer import expr_str
from .solver import default_solver
from .state import (CheckCollection, FieldChunk, Fresh, NO_ORIGIN, Origin, PredChunk,
                    RuntimeCheck, SymState, BranchCond, add_branch_cond, add_check,
                    pc_add, pc_add_all, pc_push)


class TranslateError(Exception):
    """A symbolic value could not be expressed in program terms."""


@dataclass
class Diagnostic:
    decl: str
    message: str
    span: tuple
    bcs: tuple = ()

    def __str__(self):
        return f"{self.span[0]}:{self.span[1]}: {self.decl}: {self.message}"


@dataclass
class DeclResult:
    kind: str  # predicate | method
    name: str
    ok: bool
    diagnostic: object = None


@dataclass
class Outcome:
    ok: bool
    program: object
    decls: list = field(default_factory=list)
    checks: list = field(default_factory=list)  # (method name, RuntimeCheck)
    vc_total: int = 0
    vc_discharged: int = 0

    @property
    def diagnostics(self):
        return [d.diagnostic for d in self.decls if d.diagnostic is not None]

    def checks_for(self, method):
        return [rc for m, rc in self.checks if m == method]


_ARITH = {"+": S.add, "-": S.sub, "*": S.mul, "/": S.div, "%": S.mod,
          "<": S.lt, "<=": S.le, ">": S.gt, ">=": S.ge, "==": S.eq, "!=": S.ne}


def sort_of(ty):
    if ty.kind in ("int", "char"):
        return S.INT
    if ty.kind == "bool":
        return S.BOOL
    return S.REF


def has_read(e):
    return any(isinstance(x, A.FieldAcc) for x in A.walk_expr(e))


def equi_imp(prog, phi, visited=frozenset()):
    """True when phi exposes `?` once every predicate instance is unrolled."""
    if isinstance(phi, A.FImp):
        return True
    if isinstance(phi, A.FSep):
        return equi_imp(prog, phi.left, visited) or equi_imp(prog, phi.right, visited)
    if isinstance(phi, A.FCond):
        return equi_imp(prog, phi.then, visited) or equi_imp(prog, phi.other, visited)
    if isinstance(phi, A.FPred):
        if phi.name in visited:
            return False
        return equi_imp(prog, prog.predicate(phi.name).body, visited | {phi.name})
    return False


def known_refs(sigma):
    terms = list(sigma.store.values())
    for c in sigma.h + sigma.hq:
        if isinstance(c, FieldChunk):
            terms += [c.recv, c.snap]
        else:
            terms += list(c.args)
    seen = {}
    for t in terms:
        for a in S.leaves(t):
            if a.sort == S.REF:
                seen[a] = None
    return list(seen)


def select_longest(cands):
    # program variables beat lowering temporaries, then longer access paths win
    return min(cands, key=lambda s: ("$t" in s, -s.count("."), s))


class Verifier:
    def __init__(self, prog, solver=None, tracer=None):
        self.prog = prog
        self.solver = solver or default_solver()
        self.tracer = tracer
        self.synth = {}
        self._uf_cache = {}

    # ------------------------------------------------------------ plumbing

    def fail(self, sigma, msg, node=None):
        if self.diag is None:
            span = node.span if node is not None else (0, 0)
            self.diag = Diagnostic(self.decl, msg, span, tuple(b.text for b in sigma.R.bcs))
        return False

    def trace(self, event, node, sigma):
        if self.tracer is not None:
            self.tracer(event, node, sigma)

    def valid(self, sigma, t):
        return self.solver.is_valid(sigma.pc.all(), t)

    def sat(self, sigma, t):
        return self.solver.is_sat(sigma.pc.all(), t)

    def site(self, sigma):
        o = sigma.R.origin
        if o.kind != "none":
            return (o.node.nid, o.phase)
        return sigma.site

    def vc(self, sigma, node, kind, discharged):
        key = (self.site(sigma), node.nid, kind)
        self.vcs[key] = self.vcs.get(key, True) and discharged

    def add_rc(self, sigma, node, text, kind, needs_sep=False):
        o = sigma.R.origin
        loc = o.node if o.kind != "none" else node
        span = loc.span
        if o.kind == "none" and sigma.site[1] == "exit":
            span = self.method.extra.get("end", span)
        rc = RuntimeCheck(tuple(sigma.R.bcs), o.key, loc.nid, text, needs_sep, span,
                          self.site(sigma), kind)
        return sigma.with_(R=add_check(sigma.R, rc))

    def commit(self, rcs):
        if not self.collect:
            return
        for rc in rcs:
            old = self.checks.get(rc.key)
            if old is None:
                self.checks[rc.key] = rc
            elif rc.needs_sep and not old.needs_sep:
                self.checks[rc.key] = replace(old, needs_sep=True)

    def with_origin(self, sigma, origin):
        return sigma.with_(R=replace(sigma.R, origin=origin))

    def synth_node(self, key, make):
        n = self.synth.get(key)
        if n is None:
            n = self.synth[key] = make()
        return n

    def fresh_for(self, ty_or_sort, prefix="t"):
        sort = ty_or_sort if isinstance(ty_or_sort, str) else sort_of(ty_or_sort)
        return self.fresh(prefix, sort)

    def field_sort(self, recv_expr, f):
        return sort_of(self.prog.record(recv_expr.ty.record).field_type(f))

    # ----------------------------------------------------------- translate

    def aliases(self, sigma, t):
        key = id(sigma.pc)
        hit = self._uf_cache.get(key)
        if hit is None or hit[0] is not sigma.pc:
            parent = {}

            def find(x):
                while parent.get(x, x) is not x:
                    x = parent[x]
                return x
            for c in sigma.pc.all():
                if c.op == "eq" and all(a.op in ("atom", "first", "second") for a in c.args):
                    a, b = find(c.args[0]), find(c.args[1])
                    if a is not b:
                        parent[a] = b
            groups = {}
            for x in parent:
                groups.setdefault(find(x), set()).add(x)
            for r, g in groups.items():
                g.add(r)
            if len(self._uf_cache) > 256:
                self._uf_cache.clear()
            hit = self._uf_cache[key] = (sigma.pc, groups, find)
        _, groups, find = hit
        return groups.get(find(t), {t})

    def translate(self, sigma, t):
        return self._tr(sigma, t, 0)[0]

    def _tr(self, sigma, t, depth):
        op = t.op
        if op == "int":
            return str(t.value), (8 if t.value >= 0 else 7)
        if op == "bool":
            return ("true" if t.value else "false"), 8
        if op == "null":
            return "null", 8
        if op in ("atom", "first", "second"):
            return self.resolve(sigma, t, depth), 8

        def wrap(x, need):
            s, p = self._tr(sigma, x, depth)
            return f"({s})" if p < need else s
        if op == "neg":
            return "-" + wrap(t.args[0], 7), 7
        if op == "not":
            a = t.args[0]
            if a.op == "eq":
                return f"{wrap(a.args[0], 4)} != {wrap(a.args[1], 4)}", 3
            return "!" + wrap(a, 7), 7
        if op in ("and", "or"):
            p = S.PREC[op]
            return f" {S.BIN_SYM[op]} ".join(wrap(a, p + 1) for a in t.args), p
        if op in S.BIN_SYM:
            p = S.PREC[op]
            return f"{wrap(t.args[0], p)} {S.BIN_SYM[op]} {wrap(t.args[1], p + 1)}", p
        raise TranslateError(f"cannot express {t}")

    def resolve(self, sigma, a, depth):
        if depth > 6:
            raise TranslateError(f"cannot express {a}")
        als = self.aliases(sigma, a)
        store = sigma.old_store if sigma.old_store is not None else sigma.store
        cands = [n for n, v in store.items() if v in als]

        def path(recv, f):
            try:
                return f"{self._tr(sigma, recv, depth + 1)[0]}.{f}"
            except TranslateError:
                return None
        for heap in (sigma.h, sigma.hq):
            for c in heap:
                if isinstance(c, FieldChunk) and c.snap in als:
                    p = path(c.recv, c.field)
                    if p:
                        cands.append(p)
        for b in als:
            hint = self.hints.get(b)
            if hint is not None:
                p = path(*hint)
                if p:
                    cands.append(p)
        if cands:
            return select_longest(cands)
        for c in sigma.pc.all():
            if c.op != "eq":
                continue
            x, y = c.args
            other = y if x in als else x if y in als else None
            if other is not None and other.op not in ("atom", "first", "second") and other.sort != S.SNAP:
                try:
                    s, p = self._tr(sigma, other, depth + 1)
                    return s if p >= 8 else f"({s})"
                except TranslateError:
                    pass
        raise TranslateError(f"cannot express {a}")

    def text_of(self, sigma, node, t):
        """Source text for an expression: verbatim in the declaring context,
        otherwise rebuilt from its value in the caller's terms."""
        if sigma.old_store is None and node is not None:
            return expr_str(node)
        return self.translate(sigma, t)

    # -------------------------------------------------------------- branch

    def branch(self, sigma, node, t, k_true, k_false):
        can_t = not self.valid(sigma, S.not_(t))
        can_f = not self.valid(sigma, t)
        text = None
        if can_t or can_f:
            text = self.text_of(sigma, node, t)
        site = self.site(sigma)
        okey = sigma.R.origin.key

        def side(positive):
            cond = t if positive else S.not_(t)
            pc = pc_push(sigma.pc, self.fresh("i", S.SNAP), cond)
            bc = BranchCond(okey, node.nid, text, positive, site, node.span)
            return sigma.with_(pc=pc, R=add_branch_cond(sigma.R, bc))

        if sigma.imprecise:
            saved = self.diag
            rt = k_true(side(True)) if can_t else None
            rf = k_false(side(False)) if can_f else None
            if rt is None and rf is None:
                return True
            if rt or rf:
                self.diag = saved
            if can_t and can_f and rt != rf:
                one = replace(self.add_rc(sigma, node, text if rt else f"!({text})", "branch").R.rcs[-1])
                self.commit([one])
                self.vc(sigma, node, "branch", False)
            return bool(rt) or bool(rf)
        if can_t and not k_true(side(True)):
            return False
        if can_f and not k_false(side(False)):
            return False
        return True

    # ---------------------------------------------------------------- eval

    def eval(self, sigma, e, mode, k, cond=False):
        """mode 'e' in code, 'p' while producing, 'c' while consuming."""
        if isinstance(e, A.Lit):
            if e.kind == "int":
                return k(sigma, S.int_(e.value))
            if e.kind == "bool":
                return k(sigma, S.bool_(e.value))
            if e.kind == "char":
                v = e.value
                return k(sigma, S.int_(ord(v) if isinstance(v, str) else v))
            return k(sigma, S.NULL)
        if isinstance(e, A.Var):
            if e.name not in sigma.store:
                raise KeyError(f"unbound variable {e.name}")
            return k(sigma, sigma.store[e.name])
        if isinstance(e, A.Sym):
            return k(sigma, e.term)
        if isinstance(e, A.Unop):
            f = S.not_ if e.op == "!" else S.neg
            return self.eval(sigma, e.arg, mode, lambda s, t: k(s, f(t)), cond)
        if isinstance(e, A.Binop):
            if e.op in ("&&", "||"):
                if has_read(e.right):
                    return self.short_circuit(sigma, e, mode, k, cond)
                f = S.and_ if e.op == "&&" else S.or_
                return self.eval(sigma, e.left, mode, lambda s1, l: self.eval(
                    s1, e.right, mode, lambda s2, r: k(s2, f(l, r)), cond), cond)
            f = _ARITH[e.op]
            return self.eval(sigma, e.left, mode, lambda s1, l: self.eval(
                s1, e.right, mode, lambda s2, r: k(s2, f(l, r)), cond), cond)
        if isinstance(e, A.Ternary):
            return self.eval(sigma, e.cond, mode, lambda s1, c: self.branch(
                s1, e.cond, c,
                lambda s2: self.eval(s2, e.then, mode, k, cond),
                lambda s2: self.eval(s2, e.other, mode, k, cond)), cond)
        if isinstance(e, A.FieldAcc):
            return self.eval(sigma, e.obj, mode, lambda s1, t: self.read(s1, e, t, mode, k, cond), cond)
        raise TypeError(f"cannot evaluate {type(e).__name__}")

    def short_circuit(self, sigma, e, mode, k, cond):
        def after_left(s1, l):
            rest = lambda s2: self.eval(s2, e.right, mode, k, cond)
            if e.op == "&&":
                return self.branch(s1, e.left, l, rest, lambda s2: k(s2, S.FALSE))
            return self.branch(s1, e.left, l, lambda s2: k(s2, S.TRUE), rest)
        return self.eval(sigma, e.left, mode, after_left, cond)

    def lookup(self, sigma, f, t):
        heaps = (sigma.h, sigma.hq)
        for heap in heaps:
            for c in heap:
                if isinstance(c, FieldChunk) and c.field == f and c.recv is t:
                    return c.snap
        for heap in heaps:
            for c in heap:
                if isinstance(c, FieldChunk) and c.field == f and self.valid(sigma, S.eq(c.recv, t)):
                    return c.snap
        return None

    def read(self, sigma, e, t, mode, k, cond):
        snap = self.lookup(sigma, e.field, t)
        if snap is not None:
            if mode != "p":
                self.vc(sigma, e, "read", True)
            return k(sigma, snap)
        if not sigma.imprecise:
            if mode != "p":
                self.vc(sigma, e, "read", False)
            return self.fail(sigma, f"no permission to access {expr_str(e)}", e)
        sort = self.field_sort(e.obj, e.field)
        v = self.fresh("p", sort)
        nn = S.ne(t, S.NULL)
        check = mode != "p" or (cond and sigma.R.origin.kind == "unfold")
        if check:
            self.vc(sigma, e, "read", False)
            ok, _ = self.solver.check_gradual(True, sigma.pc.all(), nn)
            if not ok:
                return self.fail(sigma, f"{expr_str(e.obj)} might be null", e)
            sigma = self.add_rc(sigma, e, f"acc({self.text_of(sigma, e.obj, t)}.{e.field})", "acc")
        if mode == "c":
            self.hints[v] = (t, e.field)
            return k(sigma, v)
        sigma = sigma.with_(hq=sigma.hq + (FieldChunk(e.field, t, v),), pc=pc_add(sigma.pc, nn))
        return k(sigma, v)

    def eval_list(self, sigma, es, mode, k, acc=()):
        if not es:
            return k(sigma, acc)
        return self.eval(sigma, es[0], mode,
                         lambda s, t: self.eval_list(s, es[1:], mode, k, acc + (t,)))

    # ------------------------------------------------------------- produce

    def produce(self, sigma, phi, delta, k):
        if isinstance(phi, A.FImp):
            return self.produce(sigma.with_(imprecise=True), phi.body, S.second(delta), k)
        if isinstance(phi, A.FExpr):
            def got(s, t):
                pc = pc_add(pc_add(s.pc, t), S.eq(delta, S.UNIT))
                return k(s.with_(pc=pc))
            return self.eval(sigma, phi.expr, "p", got)
        if isinstance(phi, A.FAcc):
            tgt = phi.target

            def got(s, t):
                f = tgt.field
                for c in s.h:
                    if isinstance(c, FieldChunk) and c.field == f and (
                            c.recv is t or self.valid(s, S.eq(c.recv, t))):
                        return self.fail(s, f"duplicate permission acc({expr_str(tgt)})", phi)
                ch = FieldChunk(f, t, S.with_sort(delta, self.field_sort(tgt.obj, f)))
                return k(s.with_(h=s.h + (ch,), pc=pc_add(s.pc, S.ne(t, S.NULL))))
            return self.eval(sigma, tgt.obj, "p", got)
        if isinstance(phi, A.FPred):
            def got(s, ts):
                for c in s.h:
                    if isinstance(c, PredChunk) and c.name == phi.name and self.args_equal(s, c.args, ts):
                        return self.fail(s, f"duplicate predicate instance {phi.name}", phi)
                return k(s.with_(h=s.h + (PredChunk(phi.name, ts, delta),)))
            return self.eval_list(sigma, list(phi.args), "p", got)
        if isinstance(phi, A.FSep):
            return self.produce(sigma, phi.left, S.first(delta),
                                lambda s: self.produce(s, phi.right, S.second(delta), k))
        if isinstance(phi, A.FCond):
            return self.eval(sigma, phi.cond, "p", lambda s, t: self.branch(
                s, phi.cond, t,
                lambda s2: self.produce(s2, phi.then, delta, k),
                lambda s2: self.produce(s2, phi.other, delta, k)), cond=True)
        raise TypeError(f"cannot produce {type(phi).__name__}")

    def args_equal(self, sigma, xs, ys):
        if len(xs) != len(ys):
            return False
        if all(x is y for x, y in zip(xs, ys)):
            return True
        return self.valid(sigma, S.and_(*(S.eq(x, y) for x, y in zip(xs, ys))))

    def well_formed(self, sigma, phi, delta, k):
        return self.produce(sigma, phi, delta,
                            lambda s2: self.produce(sigma.with_(pc=s2.pc, R=s2.R), phi, delta, k))

    # ------------------------------------------------------------- consume

    def consolidate(self, sigma):
        pc = sigma.pc
        fields = [c for c in sigma.h if isinstance(c, FieldChunk)]
        for i, c in enumerate(fields):
            pc = pc_add(pc, S.ne(c.recv, S.NULL))
            for d in fields[:i]:
                if d.field == c.field:
                    pc = pc_add(pc, S.ne(c.recv, d.recv))
        if pc is sigma.pc:
            return sigma
        if not self.solver.is_sat(pc.all()):
            return None
        return sigma.with_(pc=pc)

    def consume(self, sigma, phi, k):
        s1 = self.consolidate(sigma)
        if s1 is None:
            return True  # contradictory heap: the path is infeasible
        if isinstance(phi, A.FImp):
            def done(s, hq, h, delta):
                return k(s.with_(imprecise=True, hq=(), h=()), S.pair(S.UNIT, delta))
            return self.consume1(s1.with_(imprecise=True), s1.hq, s1.h, phi.body, done)

        def done(s, hq, h, delta):
            return k(s.with_(hq=hq, h=h), delta)
        return self.consume1(s1, s1.hq, s1.h, phi, done)

    def consume1(self, sigma, hq, h, phi, k):
        imp = sigma.imprecise
        if isinstance(phi, A.FExpr):
            def got(s, t):
                ok, residual = self.solver.check_gradual(imp, s.pc.all(), t)
                self.vc(s, phi, "expr", ok and not residual)
                if not ok:
                    return self.fail(s, f"assertion {expr_str(phi.expr)} might not hold", phi)
                if residual:
                    text = self.text_of(s, phi.expr, t) if len(residual) == 1 and residual[0] is t \
                        else self.translate(s, S.and_(*residual))
                    s = self.add_rc(s, phi, text, "expr")
                return k(s, hq, h, S.UNIT)
            return self.eval(sigma, phi.expr, "c", got)
        if isinstance(phi, A.FAcc):
            tgt = phi.target

            def got(s, t):
                ok, _ = self.solver.check_gradual(imp, s.pc.all(), S.ne(t, S.NULL))
                self.vc(s, phi, "nonnull", ok and self.valid(s, S.ne(t, S.NULL)))
                if not ok:
                    return self.fail(s, f"{expr_str(tgt.obj)} might be null", phi)
                h1, snap = self.rem_acc(s, imp, h, tgt.field, t)
                hq1 = hq
                if imp:
                    hq1, snap2 = self.rem_acc(s, imp, hq, tgt.field, t)
                    snap = snap if snap is not None else snap2
                self.vc(s, phi, "acc", snap is not None)
                if snap is None:
                    if not imp:
                        return self.fail(s, f"no permission acc({expr_str(tgt)})", phi)
                    s = self.add_rc(s, phi, f"acc({self.text_of(s, tgt.obj, t)}.{tgt.field})", "acc")
                    snap = self.fresh("p", self.field_sort(tgt.obj, tgt.field))
                    self.hints[snap] = (t, tgt.field)
                return k(s, hq1, h1, snap)
            return self.eval(sigma, tgt.obj, "c", got)
        if isinstance(phi, A.FPred):
            def got(s, ts):
                h1, snap = self.rem_pred(s, h, phi.name, ts)
                self.vc(s, phi, "pred", snap is not None)
                if snap is None:
                    if not imp:
                        return self.fail(s, f"no permission acc({phi.name}(...))", phi)
                    if s.old_store is None:
                        args = ", ".join(expr_str(a) for a in phi.args)
                    else:
                        args = ", ".join(self.translate(s, t) for t in ts)
                    s = self.add_rc(s, phi, f"acc({phi.name}({args}))", "pred", needs_sep=True)
                    snap = self.fresh("s", S.SNAP)
                return k(s, hq, h1, snap)
            return self.eval_list(sigma, list(phi.args), "c", got)
        if isinstance(phi, A.FSep):
            return self.consume1(sigma, hq, h, phi.left, lambda s, hq1, h1, d1: self.consume1(
                s, hq1, h1, phi.right, lambda s2, hq2, h2, d2: k(s2, hq2, h2, S.pair(d1, d2))))
        if isinstance(phi, A.FCond):
            return self.eval(sigma, phi.cond, "c", lambda s, t: self.branch(
                s, phi.cond, t,
                lambda s2: self.consume1(s2, hq, h, phi.then, k),
                lambda s2: self.consume1(s2, hq, h, phi.other, k)))
        raise TypeError(f"cannot consume {type(phi).__name__}")

    def rem_acc(self, sigma, imprecise, heap, f, t):
        """Remove f(t) and every same-field chunk that may alias it."""
        found, out = None, []
        for c in heap:
            if isinstance(c, FieldChunk) and c.field == f:
                if c.recv is t or self.valid(sigma, S.eq(c.recv, t)):
                    if found is None:
                        found = c.snap
                    continue
                if imprecise and self.sat(sigma, S.eq(c.recv, t)):
                    continue
            out.append(c)
        if found is None:
            # a predicate may hold the location; its contents are opaque
            out = [c for c in out if not isinstance(c, PredChunk)]
        return tuple(out), found

    def rem_pred(self, sigma, heap, name, ts):
        for i, c in enumerate(heap):
            if isinstance(c, PredChunk) and c.name == name and self.args_equal(sigma, c.args, ts):
                return heap[:i] + heap[i + 1:], c.snap
        return (), None

    # ---------------------------------------------------------------- exec

    def exec(self, sigma, s, k):
        if isinstance(s, A.Block):
            return self.exec_block(sigma, s, k)
        sigma = sigma.with_(site=(s.nid, "pre"))
        if isinstance(s, A.VarDecl):
            if s.init is None:
                return k(sigma.bind(s.name, self.fresh_for(s.ty)))
            return self.eval(sigma, s.init, "e", lambda s1, t: k(self.assign(s1, s.name, s.ty, t)))
        if isinstance(s, A.Assign):
            return self.eval(sigma, s.expr, "e",
                             lambda s1, t: k(self.assign(s1, s.target, s.expr.ty, t)))
        if isinstance(s, A.FieldAssign):
            return self.exec_field_assign(sigma, s, k)
        if isinstance(s, A.AllocS):
            r = self.fresh("t", S.REF)
            rec = self.prog.record(s.record)
            chunks = tuple(FieldChunk(f, r, self.fresh_for(ty, "p")) for f, ty in rec.fields)
            # a fresh object differs from every reference already in the state
            pc = pc_add_all(sigma.pc, [S.ne(r, S.NULL)] + [S.ne(r, v) for v in known_refs(sigma)])
            return k(sigma.with_(h=sigma.h + chunks, pc=pc).bind(s.target, r))
        if isinstance(s, A.CallS):
            return self.exec_call(sigma, s, k)
        if isinstance(s, A.AssertS):
            return self.eval(sigma, s.expr, "e", lambda s1, t: k(s1))
        if isinstance(s, A.StaticAssert):
            return self.exec_static_assert(sigma, s, k)
        if isinstance(s, A.Fold):
            return self.exec_fold(sigma, s, k)
        if isinstance(s, A.Unfold):
            return self.exec_unfold(sigma, s, k)
        if isinstance(s, A.If):
            return self.eval(sigma, s.cond, "e", lambda s1, t: self.branch(
                s1, s.cond, t,
                lambda s2: self.exec(s2, s.then, k),
                lambda s2: self.exec(s2, s.other, k)))
        if isinstance(s, A.While):
            return self.exec_while(sigma, s, k)
        raise TypeError(f"cannot execute {type(s).__name__}")

    def assign(self, sigma, name, ty, t):
        v = self.fresh("t", sort_of(ty) if ty is not None else t.sort)
        return sigma.with_(pc=pc_add(sigma.pc, S.eq(v, t))).bind(name, v)

    def exec_block(self, sigma, b, k):
        self.trace("enter", b, sigma)
        outer = set(sigma.store)
        stmts = b.stmts

        def run(i, s):
            if i == len(stmts):
                if set(s.store) != outer:
                    s = s.with_(store={n: v for n, v in s.store.items() if n in outer})
                return k(s)

            def after(s1):
                self.trace("after", stmts[i], s1)
                return run(i + 1, s1)
            return self.exec(s, stmts[i], after)
        return run(0, sigma)

    def exec_field_assign(self, sigma, s, k):
        acc = self.synth_node(("acc", s.nid), lambda: A.FAcc(_typed_field(s.obj, s.field, self.prog), s.span))

        def got(s1, t):
            tx = s1.store[s.obj.name]

            def consumed(s2, _delta):
                p = self.fresh("p", self.field_sort(s.obj, s.field))
                pc = pc_add(pc_add(s2.pc, S.ne(tx, S.NULL)), S.eq(p, t))
                return k(s2.with_(h=s2.h + (FieldChunk(s.field, tx, p),), pc=pc))
            return self.consume(s1, acc, consumed)
        return self.eval(sigma, s.expr, "e", got)

    def exec_call(self, sigma, s, k):
        m = self.prog.method(s.name)

        def got(s1, ts):
            origin = Origin("call", s, "pre", s1, ts)
            formals = {p: t for (p, _), t in zip(m.params, ts)}
            caller = s1.store
            sc = s1.with_(store=formals, old_store=caller, R=replace(s1.R, origin=origin))

            def consumed(s2, _delta):
                if equi_imp(self.prog, m.pre):
                    s2 = s2.with_(imprecise=True, hq=(), h=())
                post_store = dict(formals)
                new_caller = dict(caller)
                if m.ret is not None:
                    tz = self.fresh_for(m.ret[1])
                    post_store[m.ret[0]] = tz
                    if s.target is not None:
                        new_caller[s.target] = tz
                s3 = s2.with_(store=post_store, old_store=new_caller,
                              R=replace(s2.R, origin=Origin("call", s, "post", s1, ts)))
                return self.produce(s3, m.post, self.fresh("s", S.SNAP), lambda s4: k(
                    s4.with_(store=new_caller, old_store=None, R=replace(s4.R, origin=NO_ORIGIN))))
            return self.consume(sc, m.pre, consumed)
        return self.eval_list(sigma, list(s.args), "e", got)

    def exec_static_assert(self, sigma, s, k):
        phi = s.formula

        def consumed(s1, delta):
            imp = phi if isinstance(phi, A.FImp) else self.synth_node(
                ("imp", s.nid), lambda: A.FImp(phi, s.span))
            d = delta if isinstance(phi, A.FImp) else S.pair(S.UNIT, delta)
            return self.well_formed(s1.with_(imprecise=sigma.imprecise), imp, d,
                                    lambda s2: k(sigma.with_(pc=s2.pc, R=s2.R)))
        return self.consume(sigma, phi, consumed)

    def exec_fold(self, sigma, s, k):
        pred = self.prog.predicate(s.name)
        inst = self.synth_node(("pred", s.nid), lambda: A.FPred(s.name, s.args, s.span))

        def got(s1, ts):
            origin = Origin("fold", s, "pre", s1, ts)
            params = {p: t for (p, _), t in zip(pred.params, ts)}
            sf = s1.with_(store=params, old_store=s1.store, R=replace(s1.R, origin=origin))

            def consumed(s2, delta):
                s3 = s2.with_(store=s1.store, old_store=None, R=replace(s2.R, origin=NO_ORIGIN))
                return self.produce(s3, inst, delta, k)
            return self.consume(sf, pred.body, consumed)
        return self.eval_list(sigma, list(s.args), "e", got)

    def exec_unfold(self, sigma, s, k):
        pred = self.prog.predicate(s.name)
        inst = self.synth_node(("pred", s.nid), lambda: A.FPred(s.name, s.args, s.span))

        def got(s1, ts):
            origin = Origin("unfold", s, "pre", s1, ts)
            su = s1.with_(R=replace(s1.R, origin=origin))

            def consumed(s2, delta):
                params = {p: t for (p, _), t in zip(pred.params, ts)}
                s3 = s2.with_(store=params, old_store=s1.store)
                return self.produce(s3, pred.body, delta, lambda s4: k(
                    s4.with_(store=s1.store, old_store=None, R=replace(s4.R, origin=NO_ORIGIN))))
            return self.consume(su, inst, consumed)
        return self.eval_list(sigma, list(s.args), "e", got)

    def loop_formulas(self, s):
        def make():
            inv = s.invariant
            neg = A.Unop("!", s.cond, s.cond.span)
            neg.ty = A.BOOL
            parts = []
            for e in (s.cond, neg):
                f = A.FExpr(e, e.span)
                if isinstance(inv, A.FImp):
                    parts.append(A.FImp(A.FSep(inv.body, f, s.span), s.span))
                else:
                    parts.append(A.FSep(inv, f, s.span))
            return tuple(parts)
        return self.synth_node(("loop", s.nid), make)

    def exec_while(self, sigma, s, k):
        enter, leave = self.loop_formulas(s)
        targets = []
        for x in A.walk_stmts(s.body):
            name = getattr(x, "target", None)
            if isinstance(x, (A.Assign, A.CallS, A.AllocS)) and name in sigma.store and name not in targets:
                targets.append(name)

        def havoc(store):
            out = dict(store)
            for n in targets:
                out[n] = self.fresh("t", store[n].sort)
            return out

        def loop_origin(s_, phase):
            return s_.with_(R=replace(s_.R, origin=Origin("loop", s, phase)))

        # body path: an arbitrary iteration from a state holding inv && cond
        sb = SymState(store=havoc(sigma.store), pc=sigma.pc, site=sigma.site,
                      R=CheckCollection(bcs=sigma.R.bcs, origin=Origin("loop", s, "beginning")))

        def body_end(s3):
            s3 = loop_origin(s3, "end")
            return self.eval(s3, s.cond, "e", lambda s4, _t: self.consume(
                s4, s.invariant, lambda s5, _d: self.commit(s5.R.rcs) or True))
        saved = self.diag
        res_body = self.well_formed(sb, enter, self.fresh("s", S.SNAP), lambda s1: self.exec(
            self.with_origin(s1, NO_ORIGIN), s.body, body_end))

        def after(s4):
            return k(self.with_origin(s4, NO_ORIGIN))

        def consumed(s2, _d):
            if equi_imp(self.prog, s.invariant):
                s2 = s2.with_(imprecise=True, hq=(), h=())
            s3 = loop_origin(s2.with_(store=havoc(s2.store)), "after")
            return self.produce(s3, leave, self.fresh("s", S.SNAP), after)
        sbefore = loop_origin(sigma, "before")
        res_after = self.eval(sbefore, s.cond, "e",
                              lambda s1, _t: self.consume(s1, s.invariant, consumed))
        if sigma.imprecise:
            if not res_body and res_after:
                # sound only if the loop body never runs
                neg = leave.body.right.expr if isinstance(leave, A.FImp) else leave.right.expr
                rc = self.add_rc(sbefore, neg, f"!({expr_str(s.cond)})", "expr").R.rcs[-1]
                self.commit([rc])
                self.diag = saved if res_after else self.diag
            return res_after
        return res_body and res_after

    # -------------------------------------------------------------- driver

    def begin(self, kind, name, method=None):
        self.decl = name
        self.diag = None
        self.fresh = Fresh()
        self.hints = {}
        self.method = method
        self.collect = False

    def verify_predicate(self, p):
        self.begin("predicate", p.name)
        store = {n: self.fresh_for(ty) for n, ty in p.params}
        ok = self.well_formed(SymState(store=store), p.body, self.fresh("s", S.SNAP), lambda s: True)
        return DeclResult("predicate", p.name, ok, None if ok else self.diag)

    def verify_method(self, m):
        self.begin("method", m.name, m)
        store = {n: self.fresh_for(ty) for n, ty in m.params}
        if m.ret is not None:
            store[m.ret[0]] = self.fresh_for(m.ret[1])
        s0 = SymState(store=store, site=(m.name, "entry"))
        ok = self.well_formed(s0, m.post, self.fresh("s", S.SNAP), lambda s: True)
        if not ok:
            return DeclResult("method", m.name, False, self.diag)
        self.collect = True

        def at_exit(s):
            self.trace("exit", m, s)
            s = s.with_(site=(m.name, "exit"))
            return self.consume(s, m.post, lambda s2, _d: self.commit(s2.R.rcs) or True)

        def entry(s1):
            self.trace("entry", m, s1)
            if m.body is None:
                return True
            return self.exec(s1, m.body, at_exit)
        ok = self.well_formed(s0, m.pre, self.fresh("s", S.SNAP), entry)
        return DeclResult("method", m.name, ok, None if ok else self.diag)

    def run(self):
        self.checks = OrderedDict()
        self.vcs = {}
        decls, checks = [], []
        for p in self.prog.predicates:
            decls.append(self.verify_predicate(p))
        total = discharged = 0
        for m in self.prog.methods:
            self.checks = OrderedDict()
            self.vcs = {}
            r = self.verify_method(m)
            decls.append(r)
            if r.ok:
                checks.extend((m.name, rc) for rc in self.checks.values())
            total += len(self.vcs)
            discharged += sum(self.vcs.values())
        ok = all(d.ok for d in decls)
        return Outcome(ok, self.prog, decls, checks, total, discharged)


def _typed_field(obj, f, prog):
    e = A.FieldAcc(obj, f, obj.span)
    e.ty = prog.record(obj.ty.record).field_type(f)
    return e


_STACK = 512 * 1024 * 1024


def run_deep(fn, *args):
    """Run fn on a thread with a large stack; continuation chains nest deeply."""
    box = {}

    def target():
        try:
            box["value"] = fn(*args)
        except BaseException as exc:  # re-raised in the caller
            box["error"] = exc
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 200000))
    prev = threading.stack_size()
    threading.stack_size(_STACK)
    try:
        th = threading.Thread(target=target)
        th.start()
        th.join()
    finally:
        threading.stack_size(prev)
    if "error" in box:
        raise box["error"]
    return box["value"]


def verify(prog, solver=None, tracer=None):
    """Verify a lowered program and return its Outcome."""
    return run_deep(lambda: Verifier(prog, solver, tracer).run())


# ------------------------------------------------------------- check report

REPORT_HEADER = "gradverify-checks 1"


def site_index(method):
    if method.body is None:
        return {}
    return {s.nid: i for i, s in enumerate(A.walk_stmts(method.body))}


def format_site(site, index):
    key, phase = site
    if isinstance(key, str):
        return f"@{phase}"
    return f"@{index[key]}:{phase}"


def format_checks(outcome):
    """Serialize an Outcome as the line-oriented check report."""
    prog = outcome.program
    fname = prog.filename
    out = [REPORT_HEADER, f"file {fname}",
           f"verdict {'success' if outcome.ok else 'failure'}",
           f"obligations {outcome.vc_total} {outcome.vc_discharged}"]
    for d in outcome.decls:
        out.append(f"decl {d.kind} {d.name} {'success' if d.ok else 'failure'}")
        if d.diagnostic is not None:
            g = d.diagnostic
            out.append(f"error {d.name} {fname}:{g.span[0]}:{g.span[1]} {g.message}")
    indexes = {}
    for i, (mname, rc) in enumerate(outcome.checks, 1):
        if mname not in indexes:
            indexes[mname] = site_index(prog.method(mname))
        idx = indexes[mname]
        out.append(f"check {i}")
        out.append(f"  method {mname}")
        out.append(f"  location {fname}:{rc.span[0]}:{rc.span[1]}")
        out.append(f"  site {format_site(rc.site, idx)}")
        out.append(f"  origin {rc.origin_key[0]}")
        for bc in rc.bcs:
            out.append(f"  bc {fname}:{bc.span[0]}:{bc.span[1]} {format_site(bc.site, idx)} "
                       f"{'true' if bc.positive else 'false'}: {bc.text}")
        out.append(f"  formula {rc.text}")
        out.append(f"  needsSeparation {'true' if rc.needs_sep else 'false'}")
        out.append("end")
    return "\n".join(out) + "\n"
