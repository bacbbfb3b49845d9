"""Specification lattice: partial specifications between `?` and a full spec.

An element is one atomic conjunct of a contract, loop invariant, static
assertion or predicate body, plus one "imprecision removal" element per
formula that drops its `?` once all its conjuncts are present. A lattice
point is a set of elements; a path adds them one at a time from the empty
set (every formula `?`) to the full set (the original, precise spec).
"""
import csv
import io
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .frontend import ast as A
from .frontend.printer import formula_str
from .engine import verify, format_checks
from .instrument import MODES, instrument
from .runtime import run


class LatticeError(Exception):
    pass


@dataclass(frozen=True)
class SpecElement:
    kind: str  # acc | pred | expr | imprecision
    host: tuple  # ("pred", name) | ("pre"|"post", method) | ("inv"|"assert", method, k)
    index: int  # position among the host's atoms; -1 for imprecision removal
    text: str = ""

    def __str__(self):
        where = ":".join(str(x) for x in self.host)
        if self.kind == "imprecision":
            return f"{where} drop ?"
        return f"{where}#{self.index} {self.text}"


def atoms(phi):
    """Atomic conjuncts of phi in order, looking inside conditionals."""
    if isinstance(phi, A.FImp):
        return atoms(phi.body)
    if isinstance(phi, A.FSep):
        return atoms(phi.left) + atoms(phi.right)
    if isinstance(phi, A.FCond):
        return atoms(phi.then) + atoms(phi.other)
    if isinstance(phi, A.FExpr) and isinstance(phi.expr, A.Lit) and phi.expr.value is True:
        return []
    return [phi]


def _kind(atom):
    if isinstance(atom, A.FAcc):
        return "acc"
    if isinstance(atom, A.FPred):
        return "pred"
    return "expr"


def _loops(body, kind):
    return [s for s in A.walk_stmts(body) if isinstance(s, kind)]


def hosts(prog):
    """(host key, formula) pairs in a fixed order. Methods without bodies
    describe native code and are not part of the lattice."""
    out = []
    for pd in prog.predicates:
        out.append((("pred", pd.name), pd.body))
    for m in prog.methods:
        if m.body is None:
            continue
        out.append((("pre", m.name), m.pre))
        out.append((("post", m.name), m.post))
        for k, s in enumerate(_loops(m.body, A.While)):
            out.append((("inv", m.name, k), s.invariant))
        for k, s in enumerate(_loops(m.body, A.StaticAssert)):
            out.append((("assert", m.name, k), s.formula))
    return out


def enumerate_elements(prog):
    elems = []
    for key, phi in hosts(prog):
        if not A.is_precise(phi):
            raise LatticeError(f"{':'.join(map(str, key))} is not a complete specification")
        for i, a in enumerate(atoms(phi)):
            elems.append(SpecElement(_kind(a), key, i, formula_str(a)))
        elems.append(SpecElement("imprecision", key, -1))
    return elems


# -------------------------------------------------------------- materialize

def _prune(phi, keep, counter):
    """phi restricted to the kept atom indexes; None when nothing is left."""
    if isinstance(phi, A.FSep):
        left = _prune(phi.left, keep, counter)
        right = _prune(phi.right, keep, counter)
        if left is None or right is None:
            return left or right
        return A.FSep(left, right, phi.span)
    if isinstance(phi, A.FCond):
        then = _prune(phi.then, keep, counter)
        other = _prune(phi.other, keep, counter)
        if then is None and other is None:
            return None
        return A.FCond(phi.cond, then or A.ftrue(phi.span), other or A.ftrue(phi.span), phi.span)
    if isinstance(phi, A.FExpr) and isinstance(phi.expr, A.Lit) and phi.expr.value is True:
        return None
    i = counter[0]
    counter[0] += 1
    return phi if i in keep else None


def partial_formula(phi, keep, precise):
    if precise:
        return phi
    body = _prune(phi, keep, [0])
    return A.FImp(body if body is not None else A.ftrue(phi.span), phi.span)


def _rebuild(s, invs, asserts):
    if isinstance(s, A.Block):
        return A.Block([_rebuild(c, invs, asserts) for c in s.stmts], s.span)
    if isinstance(s, A.If):
        return A.If(s.cond, _rebuild(s.then, invs, asserts), _rebuild(s.other, invs, asserts),
                    s.span)
    if isinstance(s, A.While):
        inv = invs[s.nid]
        return A.While(s.cond, inv, _rebuild(s.body, invs, asserts), s.span)
    if isinstance(s, A.StaticAssert):
        return A.StaticAssert(asserts[s.nid], s.span)
    return s


def materialize(prog, subset):
    """The program at lattice point `subset` (a collection of SpecElements)."""
    subset = set(subset)
    keep = {}
    precise = set()
    for e in subset:
        if e.kind == "imprecision":
            precise.add(e.host)
        else:
            keep.setdefault(e.host, set()).add(e.index)
    formulas = {}
    for key, phi in hosts(prog):
        chosen = keep.get(key, set())
        if key in precise and len(chosen) != len(atoms(phi)):
            raise LatticeError(f"cannot drop ? from incomplete {':'.join(map(str, key))}")
        formulas[key] = partial_formula(phi, chosen, key in precise)
    preds = [A.PredicateDecl(pd.name, pd.params, formulas[("pred", pd.name)], pd.span)
             for pd in prog.predicates]
    methods = []
    for m in prog.methods:
        if m.body is None:
            methods.append(m)
            continue
        invs = {s.nid: formulas[("inv", m.name, k)]
                for k, s in enumerate(_loops(m.body, A.While))}
        asserts = {s.nid: formulas[("assert", m.name, k)]
                   for k, s in enumerate(_loops(m.body, A.StaticAssert))}
        methods.append(A.MethodDecl(m.name, m.params, m.ret, formulas[("pre", m.name)],
                                    formulas[("post", m.name)], _rebuild(m.body, invs, asserts),
                                    m.span, m.style, dict(m.extra)))
    return A.Program(list(prog.records), preds, methods, prog.filename)


# -------------------------------------------------------------------- paths

@dataclass(frozen=True)
class LatticePath:
    order: tuple

    def point(self, step):
        return frozenset(self.order[:step])

    def __len__(self):
        return len(self.order) + 1  # number of points, bottom to top


def random_order(elements, rng):
    """A random element order in which every imprecision removal follows
    all atoms of its formula."""
    pending = {}
    for e in elements:
        if e.kind != "imprecision":
            pending[e.host] = pending.get(e.host, 0) + 1
    avail = [e for e in elements if e.kind != "imprecision" or pending.get(e.host, 0) == 0]
    waiting = [e for e in elements if e not in avail]
    out = []
    while avail:
        e = avail.pop(rng.randrange(len(avail)))
        out.append(e)
        if e.kind != "imprecision":
            pending[e.host] -= 1
            if pending[e.host] == 0:
                ready = [w for w in waiting if w.host == e.host]
                waiting = [w for w in waiting if w.host != e.host]
                avail.extend(ready)
    return tuple(out)


def sample_paths(elements, n, seed):
    if n < 1:
        raise LatticeError("need at least one path")
    if n > math.factorial(len(elements)):
        raise LatticeError(f"only {math.factorial(len(elements))} orders of "
                           f"{len(elements)} elements exist; cannot sample {n}")
    rng = random.Random(seed)
    seen = {}
    tries = 0
    while len(seen) < n:
        tries += 1
        if tries > 1000 * n:
            raise LatticeError(f"could not find {n} distinct paths")
        o = random_order(elements, rng)
        seen.setdefault(o, None)
    return [LatticePath(o) for o in seen]


def sample_points(elements, n, seed):
    """n distinct random lattice points (prefixes of random paths)."""
    rng = random.Random(seed)
    seen = {}
    tries = 0
    while len(seen) < n:
        tries += 1
        if tries > 1000 * n:
            raise LatticeError(f"could not find {n} distinct lattice points")
        o = random_order(elements, rng)
        seen.setdefault(frozenset(o[:rng.randint(0, len(o))]), None)
    return list(seen)


# ------------------------------------------------------------------ running

@dataclass
class PointResult:
    verified: bool
    vc_total: int
    vc_discharged: int
    residual: int
    error: str = ""
    runs: dict = field(default_factory=dict)  # (mode, workload) -> RunReport


def evaluate_point(prog, subset, workloads, modes, seed=0):
    p = materialize(prog, subset)
    out = verify(p)
    res = PointResult(out.ok, out.vc_total, out.vc_discharged, len(out.checks))
    if not out.ok:
        res.error = "; ".join(f"{d.name}: {d.diagnostic.message}" for d in out.decls
                              if d.diagnostic is not None)
    report = format_checks(out)
    for mode in modes:
        if mode == "gradual" and not out.ok:
            continue
        ins = instrument(p, report, mode)
        for w in workloads:
            res.runs[(mode, w)] = run(ins.program, workload=w, seed=seed,
                                      provenance=ins.provenance)
    return res


@dataclass
class TrendRow:
    path: int
    step: int
    percent: float
    verified: bool
    vc_total: int
    vc_discharged: int
    residual: int
    checks: dict  # (mode, workload) -> executed checks, None when not run
    outcomes: dict  # (mode, workload) -> outcome string


@dataclass
class LatticeResult:
    rows: list
    violations: list  # (path, step, message) for points failing static verification
    elements: list
    modes: tuple
    workloads: tuple

    def path_rows(self, path):
        return [r for r in self.rows if r.path == path]

    def table(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = [f"{m}@{wl}" for m in self.modes for wl in self.workloads]
        w.writerow(["path", "step", "percent", "verified", "vc_total", "vc_discharged",
                    "residual"] + cols)
        for r in self.rows:
            w.writerow([r.path, r.step, f"{r.percent:.1f}", int(r.verified), r.vc_total,
                        r.vc_discharged, r.residual]
                       + ["" if r.checks.get((m, wl)) is None else r.checks[(m, wl)]
                          for m in self.modes for wl in self.workloads])
        return buf.getvalue()

    def summary(self):
        """Mean executed checks per mode near 0%, 50% and 100% specified."""
        lines = ["percent,mode,workload,mean_checks"]
        for target in (0, 50, 100):
            chosen = []
            for p in sorted({r.path for r in self.rows}):
                rows = self.path_rows(p)
                chosen.append(min(rows, key=lambda r: (abs(r.percent - target), r.step)))
            for m in self.modes:
                for wl in self.workloads:
                    vals = [r.checks[(m, wl)] for r in chosen if r.checks.get((m, wl)) is not None]
                    mean = sum(vals) / len(vals) if vals else float("nan")
                    lines.append(f"{target},{m},{wl},{mean:.1f}")
        return "\n".join(lines) + "\n"

    def mean_checks(self, mode, workload):
        vals = [r.checks[(mode, workload)] for r in self.rows
                if r.checks.get((mode, workload)) is not None]
        return sum(vals) / len(vals) if vals else 0.0


def run_lattice(prog, paths, workloads=(16,), modes=MODES, seed=0, jobs=1, cache=None):
    """Evaluate every step of every path. Points shared between paths are
    evaluated once; `cache` may carry results across calls."""
    elements = list(paths[0].order) if paths else []
    cache = {} if cache is None else cache
    workloads = tuple(workloads)
    modes = tuple(modes)
    wanted = []
    for p in paths:
        for step in range(len(p)):
            pt = p.point(step)
            key = (pt, workloads, modes, seed)
            if key not in cache and key not in wanted:
                wanted.append(key)

    def job(key):
        return key, evaluate_point(prog, key[0], workloads, modes, seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            for key, res in ex.map(job, wanted):
                cache[key] = res
    else:
        for key in wanted:
            cache[key] = job(key)[1]

    rows, violations = [], []
    for i, p in enumerate(paths):
        n = len(p.order)
        for step in range(len(p)):
            res = cache[(p.point(step), workloads, modes, seed)]
            if not res.verified:
                violations.append((i, step, res.error))
            checks = {k: r.metrics.checks for k, r in res.runs.items()}
            outcomes = {k: r.outcome for k, r in res.runs.items()}
            rows.append(TrendRow(i, step, 100.0 * step / n if n else 100.0, res.verified,
                                 res.vc_total, res.vc_discharged, res.residual,
                                 checks, outcomes))
    return LatticeResult(rows, violations, elements, modes, workloads)


def adjacent_pairs(result, workloads=None):
    """(path, step) pairs where step+1 completed every workload in gradual
    mode; the returned flag says whether step also did."""
    workloads = workloads or result.workloads
    out = []
    for p in sorted({r.path for r in result.rows}):
        rows = result.path_rows(p)
        for lo, hi in zip(rows, rows[1:]):
            if not (lo.verified and hi.verified):
                continue
            if all(hi.outcomes.get(("gradual", w)) == "completed" for w in workloads):
                ok = all(lo.outcomes.get(("gradual", w)) == "completed" for w in workloads)
                out.append((p, lo.step, ok))
    return out
