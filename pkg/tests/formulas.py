"""Random small integer formulas and a brute-force evaluator used as the
oracle for solver properties."""
import itertools
import random

from gradverify import state as S

VARS = [S.atom(n, S.INT) for n in ("a", "b", "c", "d")]
RANGE = range(-3, 4)


def evaluate(t, env):
    op = t.op
    if op == "atom":
        return env[t.value]
    if op in ("int", "bool"):
        return t.value
    args = [evaluate(a, env) for a in t.args]
    if op == "add":
        return args[0] + args[1]
    if op == "sub":
        return args[0] - args[1]
    if op == "mul":
        return args[0] * args[1]
    if op == "neg":
        return -args[0]
    if op == "eq":
        return args[0] == args[1]
    if op == "lt":
        return args[0] < args[1]
    if op == "le":
        return args[0] <= args[1]
    if op == "gt":
        return args[0] > args[1]
    if op == "ge":
        return args[0] >= args[1]
    if op == "not":
        return not args[0]
    if op == "and":
        return all(args)
    if op == "or":
        return any(args)
    raise ValueError(op)


def assignments(names):
    for vals in itertools.product(RANGE, repeat=len(names)):
        yield dict(zip(names, vals))


def random_term(rng, vars_, depth=0):
    r = rng.random()
    if depth > 1 or r < 0.4:
        return rng.choice(vars_)
    if r < 0.6:
        return S.int_(rng.randint(-3, 3))
    if r < 0.8:
        return S.add(random_term(rng, vars_, depth + 1), random_term(rng, vars_, depth + 1))
    if r < 0.9:
        return S.sub(random_term(rng, vars_, depth + 1), random_term(rng, vars_, depth + 1))
    return S.mul(S.int_(rng.randint(-2, 2)), random_term(rng, vars_, depth + 1))


def random_atom(rng, vars_):
    op = rng.choice([S.eq, S.ne, S.lt, S.le, S.gt, S.ge])
    return op(random_term(rng, vars_), random_term(rng, vars_))


def random_formula(rng, vars_, depth=0):
    r = rng.random()
    if depth >= 2 or r < 0.35:
        return random_atom(rng, vars_)
    if r < 0.6:
        return S.and_(random_formula(rng, vars_, depth + 1), random_formula(rng, vars_, depth + 1))
    if r < 0.85:
        return S.or_(random_formula(rng, vars_, depth + 1), random_formula(rng, vars_, depth + 1))
    return S.not_(random_formula(rng, vars_, depth + 1))


def random_problem(seed):
    """(variables, path condition, goal) with at most four variables."""
    rng = random.Random(seed)
    vars_ = VARS[:rng.randint(1, 4)]
    pi = [random_formula(rng, vars_) for _ in range(rng.randint(0, 3))]
    return vars_, pi, random_formula(rng, vars_)


def bounds(vars_):
    """Box constraints that make integer reasoning agree with enumeration."""
    out = []
    for v in vars_:
        out += [S.ge(v, S.int_(RANGE.start)), S.le(v, S.int_(RANGE.stop - 1))]
    return out


def holds(ts, env):
    return all(evaluate(t, env) for t in ts)
