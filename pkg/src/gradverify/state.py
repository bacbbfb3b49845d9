"""Symbolic values, path conditions, heaps, run-time checks and states."""
from dataclasses import dataclass, field, replace
from typing import Optional

INT, BOOL, REF, SNAP = "int", "bool", "ref", "snap"

_table = {}
_serial = 0


class Term:
    """Hash-consed symbolic value. Equal structure means identical object."""

    __slots__ = ("op", "args", "value", "sort", "serial", "_str", "_leaves")

    def __repr__(self):
        return f"Term({self})"

    def __str__(self):
        if self._str is None:
            self._str = _show(self)
        return self._str

    def __lt__(self, other):
        return self.serial < other.serial

    @property
    def is_atom(self):
        return self.op == "atom"

    @property
    def is_const(self):
        return self.op in ("int", "bool", "null", "unit")


def mk(op, args=(), value=None, sort=BOOL):
    global _serial
    key = (op, args, value, sort)
    t = _table.get(key)
    if t is None:
        t = Term()
        t.op, t.args, t.value, t.sort = op, args, value, sort
        _serial += 1
        t.serial = _serial
        t._str = None
        t._leaves = None
        _table[key] = t
    return t


# ---------------------------------------------------------------- constructors

def atom(name, sort):
    return mk("atom", (), name, sort)


def int_(n):
    return mk("int", (), int(n), INT)


def bool_(b):
    return mk("bool", (), bool(b), BOOL)


TRUE = bool_(True)
FALSE = bool_(False)
NULL = mk("null", (), None, REF)
UNIT = mk("unit", (), None, SNAP)


def _ints(*ts):
    return all(t.op == "int" for t in ts)


def add(a, b):
    if _ints(a, b):
        return int_(a.value + b.value)
    if b.op == "int" and b.value == 0:
        return a
    if a.op == "int" and a.value == 0:
        return b
    return mk("add", (a, b), None, INT)


def sub(a, b):
    if _ints(a, b):
        return int_(a.value - b.value)
    if b.op == "int" and b.value == 0:
        return a
    return mk("sub", (a, b), None, INT)


def mul(a, b):
    if _ints(a, b):
        return int_(a.value * b.value)
    return mk("mul", (a, b), None, INT)


def div(a, b):
    if _ints(a, b) and b.value != 0:
        q = abs(a.value) // abs(b.value)
        return int_(q if (a.value >= 0) == (b.value > 0) else -q)
    return mk("div", (a, b), None, INT)


def mod(a, b):
    if _ints(a, b) and b.value != 0:
        q = div(a, b).value
        return int_(a.value - q * b.value)
    return mk("mod", (a, b), None, INT)


def neg(a):
    if a.op == "int":
        return int_(-a.value)
    if a.op == "neg":
        return a.args[0]
    return mk("neg", (a,), None, INT)


def eq(a, b):
    if a is b:
        return TRUE
    if a.is_const and b.is_const:
        return bool_(a.value == b.value and a.op == b.op)
    return mk("eq", (a, b), None, BOOL)


def _cmp(op, a, b, f):
    if _ints(a, b):
        return bool_(f(a.value, b.value))
    return mk(op, (a, b), None, BOOL)


def lt(a, b):
    return _cmp("lt", a, b, lambda x, y: x < y)


def le(a, b):
    return _cmp("le", a, b, lambda x, y: x <= y)


def gt(a, b):
    return _cmp("gt", a, b, lambda x, y: x > y)


def ge(a, b):
    return _cmp("ge", a, b, lambda x, y: x >= y)


def not_(a):
    if a.op == "bool":
        return bool_(not a.value)
    if a.op == "not":
        return a.args[0]
    return mk("not", (a,), None, BOOL)


def and_(*ts):
    out = []
    for t in ts:
        parts = t.args if t.op == "and" else (t,)
        for p in parts:
            if p is FALSE:
                return FALSE
            if p is not TRUE and p not in out:
                out.append(p)
    if not out:
        return TRUE
    if len(out) == 1:
        return out[0]
    return mk("and", tuple(out), None, BOOL)


def or_(*ts):
    out = []
    for t in ts:
        parts = t.args if t.op == "or" else (t,)
        for p in parts:
            if p is TRUE:
                return TRUE
            if p is not FALSE and p not in out:
                out.append(p)
    if not out:
        return FALSE
    if len(out) == 1:
        return out[0]
    return mk("or", tuple(out), None, BOOL)


def ne(a, b):
    return not_(eq(a, b))


def pair(a, b):
    return mk("pair", (a, b), None, SNAP)


def first(d, sort=SNAP):
    if d.op == "pair":
        return d.args[0]
    return mk("first", (d,), None, sort)


def second(d, sort=SNAP):
    if d.op == "pair":
        return d.args[1]
    return mk("second", (d,), None, sort)


def with_sort(t, sort):
    """Re-sort a snapshot destructor term (first/second are polymorphic)."""
    if t.sort == sort or t.op not in ("first", "second", "atom"):
        return t
    if t.op == "atom":
        return atom(t.value, sort)
    return mk(t.op, t.args, None, sort)


def leaves(t):
    """Non-constant leaf terms (atoms, snapshot destructors, nonlinear terms)."""
    if t._leaves is None:
        if t.op in ("atom", "first", "second"):
            res = frozenset([t])
        elif t.is_const:
            res = frozenset()
        else:
            res = frozenset().union(*(leaves(a) for a in t.args))
        t._leaves = res
    return t._leaves


def atoms_of(t):
    """Fresh atoms occurring anywhere in t."""
    out = set()
    stack = [t]
    while stack:
        x = stack.pop()
        if x.op == "atom":
            out.add(x)
        stack.extend(x.args)
    return out


BIN_SYM = {"add": "+", "sub": "-", "mul": "*", "div": "/", "mod": "%", "eq": "==",
           "lt": "<", "le": "<=", "gt": ">", "ge": ">=", "and": "&&", "or": "||"}
PREC = {"or": 1, "and": 2, "eq": 3, "ne": 3, "lt": 4, "le": 4, "gt": 4, "ge": 4,
        "add": 5, "sub": 5, "mul": 6, "div": 6, "mod": 6}


def _prec(t):
    if t.op == "not" and t.args[0].op == "eq":
        return 3
    return PREC.get(t.op, 8)


def _paren(t, need):
    s = str(t)
    return f"({s})" if _prec(t) < need else s


def _show(t):
    op = t.op
    if op == "atom":
        return t.value
    if op == "int":
        return str(t.value)
    if op == "bool":
        return "true" if t.value else "false"
    if op == "null":
        return "null"
    if op == "unit":
        return "unit"
    if op == "neg":
        return f"-{_paren(t.args[0], 7)}"
    if op == "not":
        a = t.args[0]
        if a.op == "eq":
            return f"{_paren(a.args[0], 4)} != {_paren(a.args[1], 4)}"
        return f"!{_paren(a, 7)}"
    if op in ("and", "or"):
        p = PREC[op]
        return f" {BIN_SYM[op]} ".join(_paren(a, p + 1) for a in t.args)
    if op in BIN_SYM:
        p = PREC[op]
        return f"{_paren(t.args[0], p)} {BIN_SYM[op]} {_paren(t.args[1], p + 1)}"
    if op == "pair":
        return f"pair({t.args[0]}, {t.args[1]})"
    if op in ("first", "second"):
        return f"{op}({t.args[0]})"
    raise ValueError(op)


# ----------------------------------------------------------------- fresh names

class Fresh:
    """Per-task fresh atom supply with one counter per name prefix."""

    def __init__(self):
        self.counters = {}

    def __call__(self, prefix, sort):
        n = self.counters.get(prefix, 0) + 1
        self.counters[prefix] = n
        return atom(f"{prefix}{n}", sort)


# ------------------------------------------------------------- path conditions

@dataclass(frozen=True)
class Layer:
    id: Term
    bc: Term
    pcs: tuple = ()


class PathCondition:
    """Stack of (id, bc, pcs) layers; the base layer has bc = true."""

    __slots__ = ("layers", "_all")

    def __init__(self, layers=None):
        self.layers = layers if layers is not None else (Layer(atom("i0", SNAP), TRUE, ()),)
        self._all = None

    def __len__(self):
        return len(self.layers)

    def all(self):
        if self._all is None:
            seen = {}
            for l in self.layers:
                seen.setdefault(l.bc, None)
                for t in l.pcs:
                    seen.setdefault(t, None)
            self._all = tuple(seen)
        return self._all

    def constraints(self):
        """Every pcs entry, bottom layer first (branch conditions excluded)."""
        out = []
        for l in self.layers:
            out.extend(l.pcs)
        return out

    def bcs(self):
        return [l.bc for l in self.layers[1:]]


def pc_push(pi, id, bc):
    return PathCondition(pi.layers + (Layer(id, bc, ()),))


def pc_add(pi, t):
    top = pi.layers[-1]
    if t in top.pcs or t is TRUE:
        return pi
    return PathCondition(pi.layers[:-1] + (Layer(top.id, top.bc, top.pcs + (t,)),))


def pc_add_all(pi, ts):
    for t in ts:
        pi = pc_add(pi, t)
    return pi


def pc_all(pi):
    return set(pi.all())


# ---------------------------------------------------------------------- heaps

@dataclass(frozen=True)
class FieldChunk:
    field: str
    recv: Term
    snap: Term

    def __str__(self):
        return f"acc({self.recv},{self.field},{self.snap})"


@dataclass(frozen=True)
class PredChunk:
    name: str
    args: tuple
    snap: Term

    def __str__(self):
        return f"{self.name}({','.join(str(a) for a in self.args)})"


# --------------------------------------------------------------- checks/origin

@dataclass(frozen=True, eq=False)
class Origin:
    kind: str            # none | call | fold | unfold | loop
    node: object = None  # statement AST node
    phase: str = ""      # call: pre/post; loop: beginning/end/before/after
    state: object = None  # captured caller state
    args: tuple = ()

    @property
    def key(self):
        if self.kind == "none":
            return ("none",)
        return (self.kind, self.node.nid, self.phase)


NO_ORIGIN = Origin("none")


@dataclass(frozen=True)
class BranchCond:
    origin_key: tuple
    location: int  # nid of the condition's AST node
    text: str      # source-level condition (possibly negated)
    positive: bool = True
    site: tuple = ()  # where the condition is evaluated at run time
    span: tuple = field(default=(0, 0), compare=False, hash=False)


@dataclass(frozen=True)
class RuntimeCheck:
    bcs: tuple
    origin_key: tuple
    location: int
    text: str
    needs_sep: bool = False
    span: tuple = field(default=(0, 0), compare=False, hash=False)
    site: tuple = ()  # (statement nid or method name, phase) where the check is placed
    kind: str = field(default="expr", compare=False, hash=False)  # expr | acc | pred | branch

    @property
    def key(self):
        return (self.site, self.origin_key, self.text, self.bcs)


@dataclass(frozen=True)
class CheckCollection:
    bcs: tuple = ()
    origin: Origin = NO_ORIGIN
    rcs: tuple = ()


def add_branch_cond(R, bc):
    return replace(R, bcs=R.bcs + (bc,))


def add_check(R, rc):
    """Append a check, condensing duplicates (same site, formula and bcs)."""
    for c in R.rcs:
        if c.key == rc.key:
            if rc.needs_sep and not c.needs_sep:
                rcs = tuple(replace(x, needs_sep=True) if x is c else x for x in R.rcs)
                return replace(R, rcs=rcs)
            return R
    return replace(R, rcs=R.rcs + (rc,))


# ---------------------------------------------------------------------- state

@dataclass(frozen=True, eq=False)
class SymState:
    imprecise: bool = False
    hq: tuple = ()
    h: tuple = ()
    store: dict = field(default_factory=dict)
    pc: PathCondition = field(default_factory=PathCondition)
    R: CheckCollection = field(default_factory=CheckCollection)
    old_store: Optional[dict] = None
    site: tuple = ()  # program point of the statement being executed

    def with_(self, **kw):
        return replace(self, **kw)

    def bind(self, name, t):
        s = dict(self.store)
        s[name] = t
        return replace(self, store=s)


def sigma0():
    return SymState()


def havoc(store, names, fresh, sorts):
    out = dict(store)
    for n in names:
        out[n] = fresh("t", sorts[n])
    return out


def is_snapshot_eq(t):
    return t.op == "eq" and (t.args[0].sort == SNAP or t.args[1].sort == SNAP)


def dump(sigma):
    """Debug view of a state in the column layout of the worked trace."""
    return {
        "imprecise": sigma.imprecise,
        "hq": sorted(str(c) for c in sigma.hq),
        "h": sorted(str(c) for c in sigma.h),
        "store": {k: str(v) for k, v in sorted(sigma.store.items())},
        "pc": sorted({str(t) for t in sigma.pc.constraints() if not is_snapshot_eq(t)}),
        "bcs": [str(b) for b in sigma.pc.bcs()],
    }


def format_dump(d):
    return (f"imprecise={str(d['imprecise']).lower()} "
            f"h?={{{', '.join(d['hq'])}}} h={{{', '.join(d['h'])}}} "
            f"store={{{', '.join(f'{k}->{v}' for k, v in d['store'].items())}}} "
            f"pi={{{', '.join(d['pc'])}}}")
