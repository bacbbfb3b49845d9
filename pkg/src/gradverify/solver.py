"""Decision procedures for validity and satisfiability of path constraints.

The built-in backend handles booleans, reference equality (union-find with
`null` as a constant) and linear integer arithmetic (rational simplex plus
branch and bound). Disjunctions are case-split. Whenever a search budget is
exhausted the answer is "satisfiable", so an "unsatisfiable" (and hence a
"valid") answer is always trustworthy.
"""
import enum
import logging
import os
import shlex
import subprocess
from collections import OrderedDict
from fractions import Fraction
from math import ceil, floor

from . import state as S

log = logging.getLogger(__name__)


class Verdict(enum.Enum):
    VALID = "valid"
    SAT = "sat"
    UNSAT = "unsat"
    UNKNOWN = "unknown"


class Budget(Exception):
    pass


# ------------------------------------------------------------------ linearize

def linear(t):
    """Linear form of an int term: (coeffs {leaf: int}, constant)."""
    op = t.op
    if op == "int":
        return {}, t.value
    if op == "add" or op == "sub":
        c1, k1 = linear(t.args[0])
        c2, k2 = linear(t.args[1])
        sign = 1 if op == "add" else -1
        out = dict(c1)
        for v, c in c2.items():
            out[v] = out.get(v, 0) + sign * c
        return {v: c for v, c in out.items() if c}, k1 + sign * k2
    if op == "neg":
        c, k = linear(t.args[0])
        return {v: -x for v, x in c.items()}, -k
    if op == "mul":
        a, b = t.args
        if a.op == "int":
            c, k = linear(b)
            return {v: a.value * x for v, x in c.items() if a.value}, a.value * k
        if b.op == "int":
            c, k = linear(a)
            return {v: b.value * x for v, x in c.items() if b.value}, b.value * k
    return {t: 1}, 0


def _lin_key(coeffs, k):
    return (tuple(sorted(coeffs.items(), key=lambda p: p[0].serial)), k)


def _diff(a, b):
    """Linear form of a - b."""
    c1, k1 = linear(a)
    c2, k2 = linear(b)
    out = dict(c1)
    for v, c in c2.items():
        out[v] = out.get(v, 0) - c
    return {v: c for v, c in out.items() if c}, k1 - k2


# ----------------------------------------------------------------------- NNF
# nodes: True | False | ("lit", key) | ("and", [..]) | ("or", [..])

def _and(items):
    out = []
    for i in items:
        if i is False:
            return False
        if i is True:
            continue
        if isinstance(i, tuple) and i[0] == "and":
            out.extend(i[1])
        else:
            out.append(i)
    if not out:
        return True
    return out[0] if len(out) == 1 else ("and", out)


def _or(items):
    out = []
    for i in items:
        if i is True:
            return True
        if i is False:
            continue
        if isinstance(i, tuple) and i[0] == "or":
            out.extend(i[1])
        else:
            out.append(i)
    if not out:
        return False
    return out[0] if len(out) == 1 else ("or", out)


def _arith_lit(kind, coeffs, k):
    """Literal for `coeffs + k (kind) 0`, evaluated when constant."""
    if not coeffs:
        return {"le": k <= 0, "eq": k == 0, "ne": k != 0}[kind]
    return ("lit", (kind, _lin_key(coeffs, k)))


def _neg_lin(coeffs, k):
    return {v: -c for v, c in coeffs.items()}, -k


def nnf(t, pos=True):
    op = t.op
    if op == "bool":
        return t.value == pos
    if op == "not":
        return nnf(t.args[0], not pos)
    if op == "and":
        return (_and if pos else _or)([nnf(a, pos) for a in t.args])
    if op == "or":
        return (_or if pos else _and)([nnf(a, pos) for a in t.args])
    if op in ("lt", "le", "gt", "ge"):
        a, b = t.args
        if op in ("gt", "ge"):
            a, b = b, a
        strict = op in ("lt", "gt")
        c, k = _diff(a, b)  # a - b
        if pos:
            return _arith_lit("le", c, k + 1 if strict else k)
        c, k = _neg_lin(c, k)  # b - a
        return _arith_lit("le", c, k if strict else k + 1)
    if op == "eq":
        a, b = t.args
        if a.sort == S.SNAP or b.sort == S.SNAP:
            return True  # snapshot equations carry no theory content here
        if a.sort == S.INT:
            c, k = _diff(a, b)
            return _arith_lit("eq" if pos else "ne", c, k)
        if a.sort == S.BOOL:
            pa, na, pb, nb = nnf(a), nnf(a, False), nnf(b), nnf(b, False)
            if pos:
                return _or([_and([pa, pb]), _and([na, nb])])
            return _or([_and([pa, nb]), _and([na, pb])])
        # references
        if a is b:
            return pos
        if a.op == "null" and b.op == "null":
            return pos
        x, y = (a, b) if a.serial < b.serial else (b, a)
        return ("lit", ("req" if pos else "rne", x, y))
    if t.sort == S.BOOL:
        return ("lit", ("b", t, pos))
    raise ValueError(f"not a boolean term: {t}")


# -------------------------------------------------------------------- simplex

class Simplex:
    """Feasibility of bounded linear rows over rationals (Bland's rule)."""

    def __init__(self, nvars):
        self.n = nvars
        self.lo = {}
        self.hi = {}
        self.val = {}
        self.rows = {}  # basic var -> {nonbasic var: coeff}
        for j in range(nvars):
            self.val[j] = Fraction(0)
        self.next = nvars

    def add_row(self, coeffs, lo, hi):
        s = self.next
        self.next += 1
        row = {}
        for j, c in coeffs.items():
            if j in self.rows:  # substitute basic variable
                for k, d in self.rows[j].items():
                    row[k] = row.get(k, 0) + c * d
            else:
                row[j] = row.get(j, 0) + c
        row = {k: Fraction(v) for k, v in row.items() if v}
        self.rows[s] = row
        self.val[s] = sum((c * self.val[k] for k, c in row.items()), Fraction(0))
        self.set_bounds(s, lo, hi)
        return s

    def set_bounds(self, v, lo, hi):
        if lo is not None:
            cur = self.lo.get(v)
            self.lo[v] = lo if cur is None else max(cur, lo)
        if hi is not None:
            cur = self.hi.get(v)
            self.hi[v] = hi if cur is None else min(cur, hi)
        l, h = self.lo.get(v), self.hi.get(v)
        if l is not None and h is not None and l > h:
            return False
        if v not in self.rows:
            if l is not None and self.val[v] < l:
                self._update(v, l)
            elif h is not None and self.val[v] > h:
                self._update(v, h)
        return True

    def _update(self, j, v):
        delta = v - self.val[j]
        for b, row in self.rows.items():
            c = row.get(j)
            if c:
                self.val[b] += c * delta
        self.val[j] = v

    def _pivot(self, b, j):
        row = self.rows.pop(b)
        a = row.pop(j)
        new = {b: 1 / a}
        for k, c in row.items():
            new[k] = -c / a
        for k, r in self.rows.items():
            c = r.pop(j, None)
            if c:
                for m, d in new.items():
                    x = r.get(m, 0) + c * d
                    if x:
                        r[m] = x
                    else:
                        r.pop(m, None)
        self.rows[j] = new

    def check(self, limit=5000):
        for _ in range(limit):
            bad = None
            for b in sorted(self.rows):
                v = self.val[b]
                l, h = self.lo.get(b), self.hi.get(b)
                if (l is not None and v < l) or (h is not None and v > h):
                    bad = b
                    break
            if bad is None:
                return True
            b = bad
            row = self.rows[b]
            increase = self.lo.get(b) is not None and self.val[b] < self.lo[b]
            target = self.lo[b] if increase else self.hi[b]
            pick = None
            for j in sorted(row):
                a = row[j]
                up_ok = self.hi.get(j) is None or self.val[j] < self.hi[j]
                down_ok = self.lo.get(j) is None or self.val[j] > self.lo[j]
                if increase and ((a > 0 and up_ok) or (a < 0 and down_ok)):
                    pick = j
                    break
                if not increase and ((a < 0 and up_ok) or (a > 0 and down_ok)):
                    pick = j
                    break
            if pick is None:
                return False
            theta = (target - self.val[b]) / row[pick]
            self.val[b] = target
            self.val[pick] += theta
            for k, r in self.rows.items():
                if k != b and pick in r:
                    self.val[k] += r[pick] * theta
            self._pivot(b, pick)
        raise Budget()


def lia_sat(les, eqs, nes, depth=0, budget=None):
    """Integer feasibility of rows `lin <= 0`, `lin == 0`, `lin != 0`."""
    if depth > 40:
        raise Budget()
    if budget is not None:
        budget[0] -= 1
        if budget[0] < 0:
            raise Budget()
    vars_ = {}
    for coeffs, _ in les + eqs + nes:
        for v, _c in coeffs:
            vars_.setdefault(v, len(vars_))
    sx = Simplex(len(vars_))
    for coeffs, k in les:
        if not _add(sx, vars_, coeffs, None, -k):
            return False
    for coeffs, k in eqs:
        if not _add(sx, vars_, coeffs, -k, -k):
            return False
    if not sx.check():
        return False
    model = {v: sx.val[i] for v, i in vars_.items()}
    for v, i in vars_.items():
        x = model[v]
        if x.denominator != 1:
            key = ((v, 1),)
            return (lia_sat(les + [(key, -floor(x))], eqs, nes, depth + 1, budget)
                    or lia_sat(les + [(((v, -1),), ceil(x))], eqs, nes, depth + 1, budget))
    for coeffs, k in nes:
        value = sum(c * model[v] for v, c in coeffs) + k
        if value == 0:
            rest = [n for n in nes if n is not (coeffs, k)]
            neg = tuple((v, -c) for v, c in coeffs)
            return (lia_sat(les + [(coeffs, k + 1)], eqs, rest, depth + 1, budget)
                    or lia_sat(les + [(neg, -k + 1)], eqs, rest, depth + 1, budget))
    return True


def _add(sx, vars_, coeffs, lo, hi):
    if len(coeffs) == 1:
        v, c = coeffs[0]
        j = vars_[v]
        lo2 = None if lo is None else Fraction(lo, c)
        hi2 = None if hi is None else Fraction(hi, c)
        if c < 0:
            lo2, hi2 = hi2, lo2
        return sx.set_bounds(j, lo2, hi2)
    s = sx.add_row({vars_[v]: c for v, c in coeffs}, lo, hi)
    return sx.set_bounds(s, None, None)


# ------------------------------------------------------------------- theory

class _UF:
    def __init__(self):
        self.parent = {}

    def find(self, x):
        p = self.parent.get(x, x)
        if p is x:
            return x
        r = self.find(p)
        self.parent[x] = r
        return r

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra is not rb:
            self.parent[ra] = rb


def theory_sat(lits, budget=None):
    bools = {}
    uf = _UF()
    rnes = []
    les, eqs, nes = [], [], []
    for lit in lits:
        kind = lit[0]
        if kind == "b":
            if bools.setdefault(lit[1], lit[2]) != lit[2]:
                return False
        elif kind == "req":
            uf.union(lit[1], lit[2])
        elif kind == "rne":
            rnes.append(lit)
        elif kind == "le":
            les.append(lit[1])
        elif kind == "eq":
            eqs.append(lit[1])
        elif kind == "ne":
            nes.append(lit[1])
    for _, a, b in rnes:
        if uf.find(a) is uf.find(b):
            return False
    if not (les or eqs or nes):
        return True
    return lia_sat(les, eqs, nes, 0, budget)


# -------------------------------------------------------------------- search

def _flatten(node, lits, disj):
    if node is True:
        return True
    if node is False:
        return False
    if node[0] == "lit":
        lits.add(node[1])
    elif node[0] == "and":
        for c in node[1]:
            if not _flatten(c, lits, disj):
                return False
    else:
        disj.append(node)
    return True


def _contradicts(lit, lits):
    if lit[0] == "b":
        return ("b", lit[1], not lit[2]) in lits
    if lit[0] == "req":
        return ("rne", lit[1], lit[2]) in lits
    if lit[0] == "rne":
        return ("req", lit[1], lit[2]) in lits
    return False


class BuiltinBackend:
    name = "builtin"

    def __init__(self, max_theory_calls=4000):
        self.max_theory_calls = max_theory_calls
        self.theory_cache = OrderedDict()

    def _theory(self, lits, budget):
        key = frozenset(lits)
        r = self.theory_cache.get(key)
        if r is None:
            budget[1] -= 1
            if budget[1] < 0:
                raise Budget()
            r = theory_sat(lits, budget)
            self.theory_cache[key] = r
            if len(self.theory_cache) > 50000:
                self.theory_cache.popitem(last=False)
        return r

    def check_sat(self, terms):
        lits, disj = set(), []
        if not _flatten(_and([nnf(t) for t in terms]), lits, disj):
            return Verdict.UNSAT
        budget = [20000, self.max_theory_calls]
        try:
            ok = self._search(frozenset(lits), disj, budget)
        except Budget:
            return Verdict.UNKNOWN
        return Verdict.SAT if ok else Verdict.UNSAT

    def _search(self, lits, disj, budget):
        if not self._theory(lits, budget):
            return False
        pending = []
        for d in disj:
            alts = []
            satisfied = False
            for alt in d[1]:
                if isinstance(alt, tuple) and alt[0] == "lit":
                    if alt[1] in lits:
                        satisfied = True
                        break
                    if _contradicts(alt[1], lits):
                        continue
                alts.append(alt)
            if satisfied:
                continue
            if not alts:
                return False
            pending.append(alts)
        if not pending:
            return True
        pending.sort(key=len)
        first, rest = pending[0], [("or", a) for a in pending[1:]]
        for alt in first:
            l2, d2 = set(lits), list(rest)
            if not _flatten(alt, l2, d2):
                continue
            if self._search(frozenset(l2), d2, budget):
                return True
        return False


# ------------------------------------------------------------ SMT-LIB backend

class SmtLibBackend:
    """External solver speaking SMT-LIB 2 over stdin/stdout."""

    name = "smtlib"

    def __init__(self, cmd):
        self.cmd = cmd
        self.proc = None

    def _start(self):
        self.proc = subprocess.Popen(shlex.split(self.cmd), stdin=subprocess.PIPE,
                                     stdout=subprocess.PIPE, text=True, bufsize=1)

    def close(self):
        if self.proc is not None:
            try:
                self.proc.stdin.write("(exit)\n")
                self.proc.stdin.flush()
            except OSError:
                pass
            self.proc.wait(timeout=5)
            self.proc = None

    def script(self, terms):
        decls = {}
        body = []
        for t in terms:
            s = self._smt(t, decls)
            if s is not None:
                body.append(f"(assert {s})")
        lines = ["(reset)", "(set-logic QF_UFLIA)", "(declare-sort Ref 0)",
                 "(declare-fun null () Ref)"]
        lines += [f"(declare-fun {n} () {srt})" for n, srt in decls.values()]
        return "\n".join(lines + body + ["(check-sat)"]) + "\n"

    def _smt(self, t, decls):
        op = t.op
        if op == "int":
            return str(t.value) if t.value >= 0 else f"(- {-t.value})"
        if op == "bool":
            return "true" if t.value else "false"
        if op == "null":
            return "null"
        if t.sort == S.SNAP or op == "unit":
            return None
        if op == "eq" and (t.args[0].sort == S.SNAP or t.args[1].sort == S.SNAP):
            return None
        leafy = op in ("atom", "first", "second", "div", "mod") or (
            op == "mul" and t.args[0].op != "int" and t.args[1].op != "int")
        if leafy:
            srt = {S.INT: "Int", S.BOOL: "Bool", S.REF: "Ref"}[t.sort]
            name = f"v{t.serial}"
            decls[t] = (name, srt)
            return name
        sym = {"add": "+", "sub": "-", "mul": "*", "eq": "=", "lt": "<", "le": "<=",
               "gt": ">", "ge": ">=", "and": "and", "or": "or", "not": "not", "neg": "-"}[op]
        args = [self._smt(a, decls) for a in t.args]
        if any(a is None for a in args):
            return None
        return f"({sym} {' '.join(args)})"

    def check_sat(self, terms):
        try:
            if self.proc is None:
                self._start()
            self.proc.stdin.write(self.script(terms))
            self.proc.stdin.flush()
            ans = self.proc.stdout.readline().strip()
        except (OSError, ValueError) as exc:
            log.warning("external solver failed: %s", exc)
            self.proc = None
            return Verdict.UNKNOWN
        if ans == "unsat":
            return Verdict.UNSAT
        if ans == "sat":
            return Verdict.SAT
        log.warning("external solver answered %r", ans)
        return Verdict.UNKNOWN


# -------------------------------------------------------------------- facade

def slice_constraints(constraints, goal_leaves):
    """Constraints transitively sharing leaves with the goal (cone of influence)."""
    cs = list(constraints)
    keep = [c for c in cs if not S.leaves(c)]
    rest = [c for c in cs if S.leaves(c)]
    frontier = set(goal_leaves)
    changed = True
    while changed and rest:
        changed = False
        remaining = []
        for c in rest:
            if S.leaves(c) & frontier:
                keep.append(c)
                frontier |= S.leaves(c)
                changed = True
            else:
                remaining.append(c)
        rest = remaining
    return keep


def _push_neg(t, pos=True):
    op = t.op
    if op == "not":
        return _push_neg(t.args[0], not pos)
    if op == "and":
        parts = [_push_neg(a, pos) for a in t.args]
        return S.and_(*parts) if pos else S.or_(*parts)
    if op == "or":
        parts = [_push_neg(a, pos) for a in t.args]
        return S.or_(*parts) if pos else S.and_(*parts)
    if pos:
        return t
    flip = {"lt": S.ge, "le": S.gt, "gt": S.le, "ge": S.lt}
    if op in flip:
        return flip[op](*t.args)
    return S.not_(t)


CNF_LIMIT = 64


def cnf(t):
    """Structural CNF clauses of t; falls back to [t] beyond CNF_LIMIT clauses."""
    n = _push_neg(t)
    try:
        return _cnf(n)
    except OverflowError:
        return [t]


def _cnf(t):
    if t.op == "and":
        out = []
        for a in t.args:
            for c in _cnf(a):
                if c not in out:
                    out.append(c)
        if len(out) > CNF_LIMIT:
            raise OverflowError
        return out
    if t.op == "or":
        clauses = [S.FALSE]
        for a in t.args:
            sub = _cnf(a)
            clauses = [S.or_(c, d) for c in clauses for d in sub]
            if len(clauses) > CNF_LIMIT:
                raise OverflowError
        return clauses
    return [t]


class Solver:
    def __init__(self, backend=None):
        self.backend = backend or BuiltinBackend()
        self.cache = OrderedDict()
        self.queries = 0
        self.unknown = 0

    def _sat(self, terms):
        key = frozenset(terms)
        v = self.cache.get(key)
        if v is None:
            self.queries += 1
            v = self.backend.check_sat(list(terms))
            if v is Verdict.UNKNOWN:
                self.unknown += 1
            self.cache[key] = v
            if len(self.cache) > 100000:
                self.cache.popitem(last=False)
        return v

    def is_sat(self, constraints, goal=None):
        cs = list(constraints)
        if goal is not None:
            if goal is S.FALSE:
                return False
            cs = slice_constraints(cs, S.leaves(goal)) + [goal]
        return self._sat(cs) is not Verdict.UNSAT

    def is_valid(self, constraints, goal):
        if goal is S.TRUE:
            return True
        constraints = list(constraints)
        cs = slice_constraints(constraints, S.leaves(goal))
        if self._sat(cs + [S.not_(goal)]) is Verdict.UNSAT:
            return True
        # the slice is only exact when the dropped constraints are consistent
        return len(cs) < len(constraints) and self._sat(constraints) is Verdict.UNSAT

    def verdict(self, constraints, goal):
        if self.is_valid(constraints, goal):
            return Verdict.VALID
        return Verdict.SAT if self.is_sat(constraints, goal) else Verdict.UNSAT

    def diff(self, constraints, t):
        return [c for c in cnf(t) if not self.is_valid(constraints, c)]

    def check_gradual(self, imprecise, constraints, t):
        constraints = list(constraints)
        if self.is_valid(constraints, t):
            return True, []
        if imprecise and self.is_sat(constraints, t):
            return True, self.diff(constraints, t)
        return False, []

    def assert_gradual(self, imprecise, constraints, t):
        ok, residual = self.check_gradual(imprecise, constraints, t)
        return ("success" if ok else "failure"), residual


def make_solver(spec=None):
    """Solver from a CLI-style spec: 'builtin' or 'smtlib:CMD'."""
    spec = spec or os.environ.get("GRADVERIFY_SOLVER", "builtin")
    if spec == "builtin":
        return Solver()
    if spec.startswith("smtlib:"):
        return Solver(SmtLibBackend(spec[len("smtlib:"):]))
    raise ValueError(f"unknown solver {spec!r}")


_default = Solver()


def default_solver():
    return _default


def is_valid(constraints, goal):
    return _default.is_valid(constraints, goal)


def is_sat(constraints):
    return _default.is_sat(constraints)


def diff(constraints, t):
    return _default.diff(constraints, t)


def check_gradual(imprecise, constraints, t):
    return _default.check_gradual(imprecise, constraints, t)


def assert_gradual(imprecise, constraints, t):
    return _default.assert_gradual(imprecise, constraints, t)
