from gradverify import state as S


def test_terms_are_hash_consed():
    x = S.atom("x", S.INT)
    assert S.add(x, S.int_(1)) is S.add(S.atom("x", S.INT), S.int_(1))


def test_constant_folding():
    assert S.add(S.int_(2), S.int_(3)) is S.int_(5)
    assert S.lt(S.int_(1), S.int_(2)) is S.TRUE
    assert S.div(S.int_(-7), S.int_(2)) is S.int_(-3)
    assert S.mod(S.int_(-7), S.int_(2)) is S.int_(-1)
    assert S.not_(S.not_(S.atom("p", S.BOOL))) is S.atom("p", S.BOOL)


def test_and_or_flatten_and_absorb():
    p, q = S.atom("p", S.BOOL), S.atom("q", S.BOOL)
    assert S.and_(p, S.TRUE) is p
    assert S.and_(p, S.FALSE) is S.FALSE
    assert S.and_(S.and_(p, q), p).args == (p, q)
    assert S.or_(p, S.TRUE) is S.TRUE


def test_printing():
    x, y = S.atom("x", S.INT), S.atom("y", S.INT)
    assert str(S.ne(x, S.NULL)) == "x != null"
    assert str(S.mul(S.add(x, y), x)) == "(x + y) * x"
    assert str(S.sub(x, S.sub(y, x))) == "x - (y - x)"


def test_fresh_counters_per_prefix():
    fresh = S.Fresh()
    assert str(fresh("t", S.REF)) == "t1"
    assert str(fresh("p", S.INT)) == "p1"
    assert str(fresh("t", S.REF)) == "t2"


def test_path_condition_layers():
    x = S.atom("x", S.INT)
    pi = S.PathCondition()
    pi = S.pc_add(pi, S.gt(x, S.int_(0)))
    bc = S.lt(x, S.int_(5))
    pi2 = S.pc_add(S.pc_push(pi, S.atom("i1", S.SNAP), bc), S.eq(x, S.int_(3)))
    assert len(pi2) == 2 and len(pi) == 1
    assert pi2.bcs() == [bc]
    assert pi2.constraints() == [S.gt(x, S.int_(0)), S.eq(x, S.int_(3))]
    assert bc in S.pc_all(pi2)
    assert S.pc_add(pi, S.TRUE) is pi


def test_snapshot_pairs():
    a, b = S.atom("a", S.INT), S.atom("b", S.INT)
    d = S.pair(a, b)
    assert S.first(d) is a and S.second(d) is b
    s = S.atom("s", S.SNAP)
    assert str(S.first(s)) == "first(s)"


def test_leaves_and_atoms():
    x, y = S.atom("x", S.INT), S.atom("y", S.INT)
    t = S.le(S.add(x, S.int_(1)), S.mul(y, S.int_(2)))
    assert S.leaves(t) == {x, y}
    assert S.atoms_of(t) == {x, y}
