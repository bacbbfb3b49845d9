"""Lowering to the core statement language.

After lowering: calls, allocations and conditional expressions occur only
in statement position, field writes have a variable receiver, `for` is
`while`, and `return e` is an assignment to the result variable.
"""
import re

from . import ast as A

TEMP_RE = re.compile(r"^\$t(\d+)$")


def is_pure(e):
    return not any(isinstance(s, (A.CallE, A.AllocE, A.Ternary)) for s in A.walk_expr(e))


class Lowerer:
    def __init__(self, prog):
        self.prog = prog
        hi = 0
        for m in prog.methods:
            if m.body is None:
                continue
            for s in A.walk_stmts(m.body):
                if isinstance(s, A.VarDecl):
                    mt = TEMP_RE.match(s.name)
                    if mt:
                        hi = max(hi, int(mt.group(1)))
        self.counter = hi
        self.ret_name = None

    def temp(self):
        self.counter += 1
        return f"$t{self.counter}"

    def run(self):
        p = self.prog
        methods = []
        for m in p.methods:
            body = m.body
            if body is not None:
                self.ret_name = m.ret[0] if m.ret else None
                body = A.Block(self.stmts(body.stmts), body.span)
            methods.append(A.MethodDecl(m.name, m.params, m.ret, m.pre, m.post, body,
                                        m.span, m.style, dict(m.extra)))
        return A.Program(list(p.records), list(p.predicates), methods, p.filename)

    def stmts(self, ss):
        out = []
        for s in ss:
            out.extend(self.stmt(s))
        return out

    def block(self, b):
        return A.Block(self.stmts(b.stmts), b.span)

    def stmt(self, s):
        sp = s.span
        if isinstance(s, A.Block):
            return [self.block(s)]
        if isinstance(s, A.VarDecl):
            if s.init is None or is_pure(s.init):
                return [s]
            return [A.VarDecl(s.name, s.ty, None, sp)] + self.assign(s.name, s.init, sp)
        if isinstance(s, A.Assign):
            return self.assign(s.target, s.expr, sp)
        if isinstance(s, A.FieldAssign):
            pre, obj = self.hoist(s.obj)
            if not isinstance(obj, A.Var):
                t = self.temp()
                pre.append(A.VarDecl(t, obj.ty, obj, sp))
                obj = _var(t, obj.ty, sp)
            pre2, rhs = self.hoist(s.expr)
            return pre + pre2 + [A.FieldAssign(obj, s.field, rhs, sp)]
        if isinstance(s, A.CallS):
            pre, args = self.hoist_list(s.args)
            return pre + [A.CallS(s.target, s.name, args, sp)]
        if isinstance(s, A.AssertS):
            pre, e = self.hoist(s.expr)
            return pre + [A.AssertS(e, sp)]
        if isinstance(s, A.If):
            pre, c = self.hoist(s.cond)
            return pre + [A.If(c, self.block(s.then), self.block(s.other), sp)]
        if isinstance(s, A.While):
            return self.loop(s.cond, s.invariant, s.body.stmts, [], sp)
        if isinstance(s, A.For):
            init = self.stmt(s.init) if s.init is not None else []
            step = [s.step] if s.step is not None else []
            return [A.Block(init + self.loop(s.cond, s.invariant, s.body.stmts, step, sp), sp)]
        if isinstance(s, A.Return):
            if s.expr is None:
                return []
            return self.assign(self.ret_name, s.expr, sp)
        return [s]

    def loop(self, cond, inv, body, step, sp):
        pre, c = self.hoist(cond)
        body_stmts = self.stmts(body) + self.stmts(step)
        if not pre:
            return [A.While(c, inv, A.Block(body_stmts, sp), sp)]
        decls, reeval = [], []
        for p in pre:
            if isinstance(p, A.VarDecl):
                decls.append(A.VarDecl(p.name, p.ty, None, p.span))
                if p.init is not None:
                    reeval.append(A.Assign(p.name, p.init, p.span))
            else:
                reeval.append(p)
        return decls + reeval + [A.While(c, inv, A.Block(body_stmts + _fresh_copy(reeval), sp), sp)]

    def assign(self, x, e, sp):
        if isinstance(e, A.CallE):
            pre, args = self.hoist_list(e.args)
            return pre + [A.CallS(x, e.name, args, sp)]
        if isinstance(e, A.AllocE):
            return [A.AllocS(x, e.record, sp)]
        if isinstance(e, A.Ternary):
            pre, c = self.hoist(e.cond)
            return pre + [A.If(c, A.Block(self.assign(x, e.then, sp), sp),
                               A.Block(self.assign(x, e.other, sp), sp), sp)]
        if isinstance(e, A.Binop) and e.op in ("&&", "||") and not is_pure(e.right):
            return self.assign(x, _shortcircuit(e), sp)
        pre, e2 = self.hoist(e)
        return pre + [A.Assign(x, e2, sp)]

    def hoist_list(self, es):
        pre, out = [], []
        for e in es:
            p, e2 = self.hoist(e)
            pre += p
            out.append(e2)
        return pre, out

    def hoist(self, e):
        if is_pure(e):
            return [], e
        sp = e.span
        if isinstance(e, A.FieldAcc):
            pre, o = self.hoist(e.obj)
            return pre, _typed(A.FieldAcc(o, e.field, sp), e.ty)
        if isinstance(e, A.Unop):
            pre, a = self.hoist(e.arg)
            return pre, _typed(A.Unop(e.op, a, sp), e.ty)
        if isinstance(e, A.Binop):
            if e.op in ("&&", "||") and not is_pure(e.right):
                return self.hoist(_shortcircuit(e))
            pl, l = self.hoist(e.left)
            pr, r = self.hoist(e.right)
            return pl + pr, _typed(A.Binop(e.op, l, r, sp), e.ty)
        if isinstance(e, (A.CallE, A.AllocE, A.Ternary)):
            t = self.temp()
            return [A.VarDecl(t, e.ty, None, sp)] + self.assign(t, e, sp), _var(t, e.ty, sp)
        raise TypeError(e)


def _shortcircuit(e):
    f = A.Lit("bool", e.op == "||", e.span)
    f.ty = A.BOOL
    t = A.Ternary(e.left, e.right, f, e.span) if e.op == "&&" else A.Ternary(e.left, f, e.right, e.span)
    t.ty = A.BOOL
    return t


def _typed(e, ty):
    e.ty = ty
    return e


def _var(name, ty, sp):
    v = A.Var(name, sp)
    v.ty = ty
    return v


def _fresh_copy(stmts):
    # statements re-emitted at the loop end need their own node identities
    return [_clone_stmt(s) for s in stmts]


def _clone_expr(e):
    if e is None:
        return None
    if isinstance(e, A.Var):
        c = A.Var(e.name, e.span)
    elif isinstance(e, A.Lit):
        c = A.Lit(e.kind, e.value, e.span)
    elif isinstance(e, A.FieldAcc):
        c = A.FieldAcc(_clone_expr(e.obj), e.field, e.span)
    elif isinstance(e, A.Unop):
        c = A.Unop(e.op, _clone_expr(e.arg), e.span)
    elif isinstance(e, A.Binop):
        c = A.Binop(e.op, _clone_expr(e.left), _clone_expr(e.right), e.span)
    else:
        raise TypeError(e)
    c.ty = e.ty
    return c


def _clone_stmt(s):
    if isinstance(s, A.Assign):
        return A.Assign(s.target, _clone_expr(s.expr), s.span)
    if isinstance(s, A.CallS):
        return A.CallS(s.target, s.name, [_clone_expr(a) for a in s.args], s.span)
    if isinstance(s, A.AllocS):
        return A.AllocS(s.target, s.record, s.span)
    if isinstance(s, A.If):
        return A.If(_clone_expr(s.cond), A.Block([_clone_stmt(x) for x in s.then.stmts], s.span),
                    A.Block([_clone_stmt(x) for x in s.other.stmts], s.span), s.span)
    if isinstance(s, A.VarDecl):
        return A.VarDecl(s.name, s.ty, _clone_expr(s.init), s.span)
    raise TypeError(s)


def lower(prog):
    return Lowerer(prog).run()
