"""Recursive-descent parser for .gvl programs."""
from . import ast as A
from .builtins import BUILTIN_RECORDS
from .lexer import ParseError, tokenize

RESERVED_PREFIXES = ("$", "_cond_", "_ownedFields", "_tempFields", "_calleeFields", "_tmp",
                     "_pred_", "_sep_", "_fp_")
RESERVED_NAMES = {"_id"}

# binary precedence, loosest first
BIN_LEVELS = [
    ["||"],
    ["&&"],
    ["==", "!="],
    ["<", "<=", ">", ">="],
    ["+", "-"],
    ["*", "/", "%"],
]


def is_reserved(name):
    return name in RESERVED_NAMES or name.startswith(RESERVED_PREFIXES)


class Parser:
    def __init__(self, src, filename="<input>", allow_reserved=False):
        self.toks = tokenize(src, filename)
        self.pos = 0
        self.filename = filename
        self.allow_reserved = allow_reserved
        self.records = set()
        self.aliases = {}
        self._prescan()

    # -- token helpers
    def _prescan(self):
        t = self.toks
        for i in range(len(t) - 2):
            if t[i].text == "struct" and t[i + 1].kind == "ident":
                self.records.add(t[i + 1].text)
            if t[i].text == "typedef" and t[i + 1].text == "struct" and i + 3 < len(t):
                self.aliases[t[i + 3].text] = t[i + 2].text

    @property
    def tok(self):
        return self.toks[self.pos]

    def peek(self, k=1):
        return self.toks[min(self.pos + k, len(self.toks) - 1)]

    def error(self, msg, tok=None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col, self.filename)

    def at(self, text):
        return self.tok.text == text and self.tok.kind in ("op", "kw")

    def accept(self, text):
        if self.at(text):
            self.pos += 1
            return True
        return False

    def expect(self, text):
        if not self.at(text):
            self.error(f"expected {text!r}, found {self.tok.text or 'end of input'!r}")
        t = self.tok
        self.pos += 1
        return t

    def ident(self):
        t = self.tok
        if t.kind != "ident":
            self.error(f"expected identifier, found {t.text or 'end of input'!r}")
        self.pos += 1
        if is_reserved(t.text) and not self.allow_reserved:
            self.error(f"identifier {t.text!r} uses a reserved name", t)
        return t.text

    # -- types
    def is_type_start(self, k=0):
        t = self.peek(k)
        if t.kind == "kw" and t.text in ("int", "bool", "char", "void", "Int", "Bool", "struct"):
            return True
        if t.kind == "ident" and (t.text in self.records or t.text in self.aliases
                                  or t.text in BUILTIN_RECORDS):
            return self.peek(k + 1).text == "*"
        return False

    def parse_type(self):
        t = self.tok
        if t.text in ("int", "Int"):
            self.pos += 1
            return A.INT
        if t.text in ("bool", "Bool"):
            self.pos += 1
            return A.BOOL
        if t.text == "char":
            self.pos += 1
            return A.CHAR
        if t.text == "void":
            self.pos += 1
            return A.VOID
        if t.text == "struct":
            self.pos += 1
            name = self.ident()
        elif t.kind == "ident":
            self.pos += 1
            name = self.aliases.get(t.text, t.text)
        else:
            self.error(f"expected a type, found {t.text!r}")
        self.expect("*")
        return A.ref(name)

    # -- program
    def parse_program(self):
        prog = A.Program(filename=self.filename)
        seen = set()

        def declare(kind, name, tok):
            if (kind, name) in seen:
                self.error(f"duplicate {kind} {name!r}", tok)
            seen.add((kind, name))

        while self.tok.kind != "eof":
            t = self.tok
            if t.text == "typedef":
                self.pos += 1
                self.expect("struct")
                self.ident()
                self.ident()
                self.expect(";")
            elif t.text == "struct" and self.peek(2).text == ";":
                self.pos += 3
            elif t.text == "struct" and self.peek(2).text == "{":
                rec = self.parse_record()
                declare("record", rec.name, t)
                prog.records.append(rec)
            elif t.text == "predicate":
                pred = self.parse_predicate()
                declare("predicate", pred.name, t)
                prog.predicates.append(pred)
            elif t.text == "method" or self.is_type_start():
                m = self.parse_method()
                declare("method", m.name, t)
                prog.methods.append(m)
            else:
                self.error(f"unexpected {t.text!r} at top level")
        return prog

    def parse_record(self):
        span = self.tok.span
        self.expect("struct")
        name = self.ident()
        self.expect("{")
        fields = []
        names = set()
        while not self.at("}"):
            ty = self.parse_type()
            ftok = self.tok
            fname = self.ident()
            if fname in names:
                self.error(f"duplicate field {fname!r} in {name}", ftok)
            names.add(fname)
            fields.append((fname, ty))
            self.expect(";")
        self.expect("}")
        self.expect(";")
        return A.RecordDecl(name, fields, span)

    def parse_params(self):
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                ty = self.parse_type()
                params.append((self.ident(), ty))
                if not self.accept(","):
                    break
        self.expect(")")
        return params

    def parse_predicate(self):
        span = self.tok.span
        self.expect("predicate")
        name = self.ident()
        params = self.parse_params()
        self.expect("=")
        body = self.parse_formula()
        self.expect(";")
        return A.PredicateDecl(name, params, body, span)

    def parse_method(self):
        span = self.tok.span
        if self.accept("method"):
            style = "method"
            name = self.ident()
            params = self.parse_params()
            ret = None
            if self.accept("returns"):
                self.expect("(")
                ty = self.parse_type()
                ret = (self.ident(), ty)
                self.expect(")")
        else:
            style = "c"
            rty = self.parse_type()
            name = self.ident()
            params = self.parse_params()
            ret = None if rty == A.VOID else (A.RESULT, rty)
        pres, posts = [], []
        while self.at("requires") or self.at("ensures"):
            which = pres if self.tok.text == "requires" else posts
            self.pos += 1
            which.append(self.parse_formula())
            self.expect(";")
        pre = combine(pres, span)
        post = combine(posts, span)
        if self.accept(";"):
            body = None
        else:
            body = self.parse_block()
        m = A.MethodDecl(name, params, ret, pre, post, body, span, style)
        if body is not None:
            m.extra["end"] = self.last_close
        if style == "method" and ret is not None:
            rename_result(m, ret[0])
        return m

    # -- formulas
    def parse_formula(self):
        t = self.tok
        e = self.parse_expr(spec=True)
        return to_formula(e, self, t)

    # -- statements
    def parse_block(self):
        span = self.tok.span
        self.expect("{")
        stmts = []
        while not self.at("}"):
            if self.tok.kind == "eof":
                self.error("unterminated block")
            stmts.append(self.parse_stmt())
        self.last_close = self.tok.span
        self.expect("}")
        return A.Block(stmts, span)

    def parse_stmt(self):
        t = self.tok
        span = t.span
        if self.at("{"):
            return self.parse_block()
        if self.at("if"):
            self.pos += 1
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            then = as_block(self.parse_stmt())
            other = as_block(self.parse_stmt()) if self.accept("else") else A.Block([], span)
            return A.If(cond, then, other, span)
        if self.at("while"):
            self.pos += 1
            self.expect("(")
            cond = self.parse_expr()
            self.expect(")")
            inv = self.parse_invariants(span)
            body = as_block(self.parse_stmt())
            return A.While(cond, inv, body, span)
        if self.at("for"):
            self.pos += 1
            self.expect("(")
            init = None if self.at(";") else self.parse_simple()
            self.expect(";")
            cond = A.Lit("bool", True, span) if self.at(";") else self.parse_expr()
            self.expect(";")
            step = None if self.at(")") else self.parse_simple()
            self.expect(")")
            inv = self.parse_invariants(span)
            body = as_block(self.parse_stmt())
            return A.For(init, cond, step, inv, body, span)
        if self.at("return"):
            self.pos += 1
            e = None if self.at(";") else self.parse_expr()
            self.expect(";")
            return A.Return(e, span)
        if self.at("assert"):
            self.pos += 1
            if t.in_spec:
                phi = self.parse_formula()
                self.expect(";")
                return A.StaticAssert(phi, span)
            self.expect("(")
            e = self.parse_expr()
            self.expect(")")
            self.expect(";")
            return A.AssertS(e, span)
        if self.at("fold") or self.at("unfold"):
            kind = self.tok.text
            self.pos += 1
            e = self.parse_expr(spec=True)
            if isinstance(e, A.AccE):
                e = e.target
            if not isinstance(e, A.CallE):
                self.error(f"{kind} expects a predicate instance", t)
            self.expect(";")
            cls = A.Fold if kind == "fold" else A.Unfold
            return cls(e.name, e.args, span)
        if self.at("loop_invariant") or self.at("invariant"):
            self.error("loop invariant outside of a loop header")
        s = self.parse_simple()
        self.expect(";")
        return s

    def parse_invariants(self, span):
        invs = []
        while self.at("loop_invariant") or self.at("invariant"):
            self.pos += 1
            invs.append(self.parse_formula())
            self.expect(";")
        return combine(invs, span)

    def parse_simple(self):
        """Declaration, assignment, increment, or call (no trailing ';')."""
        t = self.tok
        span = t.span
        if self.is_type_start():
            ty = self.parse_type()
            name = self.ident()
            init = self.parse_expr() if self.accept("=") else None
            return A.VarDecl(name, ty, init, span)
        lhs = self.parse_expr()
        if self.at("=") or self.at("+=") or self.at("-=") or self.at("*="):
            op = self.tok.text
            self.pos += 1
            rhs = self.parse_expr()
            if op != "=":
                rhs = A.Binop(op[0], clone_expr(lhs), rhs, span)
            return make_assign(self, lhs, rhs, t)
        if self.at("++") or self.at("--"):
            op = self.tok.text
            self.pos += 1
            rhs = A.Binop(op[0], clone_expr(lhs), A.Lit("int", 1, span), span)
            return make_assign(self, lhs, rhs, t)
        if isinstance(lhs, A.CallE):
            return A.CallS(None, lhs.name, lhs.args, span)
        self.error("expression statement must be an assignment or call", t)

    # -- expressions
    def parse_expr(self, spec=False):
        return self.parse_ternary(spec)

    def parse_ternary(self, spec):
        t = self.tok
        c = self.parse_bin(0, spec)
        if self.at("?"):
            self.pos += 1
            a = self.parse_ternary(spec)
            self.expect(":")
            b = self.parse_ternary(spec)
            return A.Ternary(c, a, b, t.span)
        return c

    def parse_bin(self, level, spec):
        if level == len(BIN_LEVELS):
            return self.parse_unary(spec)
        left = self.parse_bin(level + 1, spec)
        while self.tok.kind == "op" and self.tok.text in BIN_LEVELS[level]:
            t = self.tok
            self.pos += 1
            right = self.parse_bin(level + 1, spec)
            left = A.Binop(t.text, left, right, t.span)
        return left

    def parse_unary(self, spec):
        t = self.tok
        if self.at("!"):
            self.pos += 1
            return A.Unop("!", self.parse_unary(spec), t.span)
        if self.at("-"):
            self.pos += 1
            if self.tok.kind == "int":
                v = int(self.tok.text)
                self.pos += 1
                return self.parse_postfix(A.Lit("int", -v, t.span))
            return A.Unop("-", self.parse_unary(spec), t.span)
        return self.parse_postfix(self.parse_primary(spec))

    def parse_postfix(self, e):
        while self.at(".") or self.at("->"):
            t = self.tok
            self.pos += 1
            f = self.ident()
            e = A.FieldAcc(e, f, t.span)
        return e

    def parse_primary(self, spec):
        t = self.tok
        span = t.span
        if t.kind == "int":
            self.pos += 1
            return A.Lit("int", int(t.text), span)
        if t.kind == "char":
            self.pos += 1
            return A.Lit("char", t.text, span)
        if t.text in ("true", "false"):
            self.pos += 1
            return A.Lit("bool", t.text == "true", span)
        if t.text in ("NULL", "null"):
            self.pos += 1
            return A.Lit("null", None, span)
        if t.text == "?" and spec:
            self.pos += 1
            return A.ImpE(span)
        if t.text == "(":
            self.pos += 1
            e = self.parse_expr(spec)
            self.expect(")")
            return e
        if t.text == "alloc":
            self.pos += 1
            self.expect("(")
            self.accept("struct")
            name = self.ident()
            ty = A.ref(self.aliases.get(name, name))
            self.accept("*")
            self.expect(")")
            return A.AllocE(ty.record, span)
        if t.text == "acc":
            self.pos += 1
            self.expect("(")
            e = self.parse_expr(spec)
            self.expect(")")
            return A.AccE(e, span)
        if t.kind == "ident":
            if t.text == A.RESULT:
                self.pos += 1
                return A.Var(A.RESULT, span)
            name = self.ident()
            if self.at("("):
                self.pos += 1
                args = []
                if not self.at(")"):
                    while True:
                        args.append(self.parse_expr(spec))
                        if not self.accept(","):
                            break
                self.expect(")")
                return A.CallE(name, args, span)
            return A.Var(name, span)
        self.error(f"unexpected {t.text or 'end of input'!r} in expression")


def as_block(s):
    return s if isinstance(s, A.Block) else A.Block([s], s.span)


def make_assign(p, lhs, rhs, tok):
    if isinstance(lhs, A.Var):
        return A.Assign(lhs.name, rhs, tok.span)
    if isinstance(lhs, A.FieldAcc):
        return A.FieldAssign(lhs.obj, lhs.field, rhs, tok.span)
    p.error("invalid assignment target", tok)


def clone_expr(e):
    if isinstance(e, A.Var):
        return A.Var(e.name, e.span)
    if isinstance(e, A.FieldAcc):
        return A.FieldAcc(clone_expr(e.obj), e.field, e.span)
    if isinstance(e, A.Lit):
        return A.Lit(e.kind, e.value, e.span)
    if isinstance(e, A.Unop):
        return A.Unop(e.op, clone_expr(e.arg), e.span)
    if isinstance(e, A.Binop):
        return A.Binop(e.op, clone_expr(e.left), clone_expr(e.right), e.span)
    if isinstance(e, A.Ternary):
        return A.Ternary(clone_expr(e.cond), clone_expr(e.then), clone_expr(e.other), e.span)
    if isinstance(e, A.CallE):
        return A.CallE(e.name, [clone_expr(a) for a in e.args], e.span)
    if isinstance(e, A.AllocE):
        return A.AllocE(e.record, e.span)
    raise TypeError(e)


def combine(parts, span):
    """Conjoin several contract clauses; a missing clause means `?`."""
    if not parts:
        return A.FImp(A.ftrue(span), span)
    if len(parts) == 1:
        return parts[0]
    imprecise = any(isinstance(p, A.FImp) for p in parts)
    statics = [c for p in parts for c in A.conjuncts(A.static_part(p))
               if not is_true(c)]
    body = A.sep_all(statics, span)
    return A.FImp(body, span) if imprecise else body


def is_true(phi):
    return (isinstance(phi, A.FExpr) and isinstance(phi.expr, A.Lit)
            and phi.expr.kind == "bool" and phi.expr.value is True)


def _flatten_and(e, out):
    if isinstance(e, A.Binop) and e.op == "&&":
        _flatten_and(e.left, out)
        _flatten_and(e.right, out)
    else:
        out.append(e)
    return out


def to_formula(e, p=None, tok=None):
    """Convert a parsed specification expression to a formula tree."""
    parts = _flatten_and(e, [])
    if isinstance(parts[0], A.ImpE):
        rest = parts[1:]
        body = A.sep_all([_conjunct(c, p, tok) for c in rest], parts[0].span)
        return A.FImp(body, parts[0].span)
    return A.sep_all([_conjunct(c, p, tok) for c in parts], parts[0].span)


def _fail(p, tok, msg):
    if p is not None:
        p.error(msg, tok)
    raise ParseError(msg)


def _precise(e, p, tok):
    phi = to_formula(e, p, tok)
    if isinstance(phi, A.FImp):
        _fail(p, tok, "'?' may only appear once, leftmost in a formula")
    return phi


def _conjunct(c, p, tok):
    if isinstance(c, A.ImpE):
        _fail(p, tok, "'?' may only appear once, leftmost in a formula")
    if isinstance(c, A.AccE):
        if isinstance(c.target, A.CallE):
            return A.FPred(c.target.name, c.target.args, c.span)
        return A.FAcc(c.target, c.span)
    if isinstance(c, A.CallE):
        return A.FPred(c.name, c.args, c.span)
    if isinstance(c, A.Ternary):
        return A.FCond(c.cond, _precise(c.then, p, tok), _precise(c.other, p, tok), c.span)
    for sub in A.walk_expr(c):
        if isinstance(sub, A.ImpE):
            _fail(p, tok, "'?' may only appear once, leftmost in a formula")
        if isinstance(sub, (A.AccE, A.CallE, A.Ternary, A.AllocE)):
            _fail(p, tok, "permissions and predicate instances must be top-level conjuncts")
    return A.FExpr(c, c.span)


def rename_result(m, name):
    def fix(e):
        for sub in A.walk_expr(e):
            if isinstance(sub, A.Var) and sub.name == A.RESULT:
                sub.name = name
    for sub in A.walk_formula(m.post):
        if isinstance(sub, A.Expr):
            fix(sub)


def parse(src, filename="<input>", allow_reserved=False):
    return Parser(src, filename, allow_reserved).parse_program()


def parse_formula(src, allow_reserved=True):
    p = Parser("//@ " + src if "\n" not in src else src, "<formula>", allow_reserved)
    phi = p.parse_formula()
    if p.tok.kind != "eof":
        p.error("trailing input after formula")
    return phi


def parse_expr(src, allow_reserved=True):
    p = Parser(src, "<expr>", allow_reserved)
    e = p.parse_expr()
    if p.tok.kind != "eof":
        p.error("trailing input after expression")
    return e
