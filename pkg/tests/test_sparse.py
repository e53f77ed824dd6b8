import itertools
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helicoid.dyadic import DyadicCube, all_cubes
from helicoid.errors import SparseConstructionError
from helicoid.gridfn import GridFunction
from helicoid.sparse import (
    SparseCollection,
    build_sparse,
    carleson_packing,
    sparse_domination_ratio,
    sparse_form,
    verify_sparse,
)

TOP1 = DyadicCube(1, 0, (0,))


def spiky(d, J, seed):
    rng = np.random.default_rng(seed)
    return GridFunction(d, J, rng.pareto(1.5, (1 << J,) * d))


def cells(Q, J):
    side = (1 << J) >> -Q.scale
    return range(Q.corner[0] * side, (Q.corner[0] + 1) * side)


def avg(f, Q, J, e):
    return np.mean(np.abs(f.samples[list(cells(Q, J))]) ** e) ** (1 / e)


def brute_children(Q, tracked, J, C):
    """Maximal strict subintervals where some ave |h|^e exceeds C times its value on Q."""
    hot = []
    for j in range(Q.scale - 1, -J - 1, -1):
        for c in range(Q.corner[0] << (Q.scale - j), (Q.corner[0] + 1) << (Q.scale - j)):
            P = DyadicCube(1, j, (c,))
            if any(avg(h, P, J, e) ** e > C * avg(h, Q, J, e) ** e for h, e in tracked):
                if not any(P.within(H) for H in hot):
                    hot.append(P)
    return hot


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_build_sparse_is_sparse(seed):
    J = 7
    fs = [spiky(1, J, seed), spiky(1, J, seed + 1)]
    v = spiky(1, J, seed + 2)
    c = build_sparse(fs, (1, 2, 1), 1, v, TOP1)
    assert verify_sparse(c)
    assert carleson_packing(c) <= 1 / c.eta
    for Q in c.cubes[1:]:
        assert any(Q.ancestor(u) in c.witnesses for u in range(Q.scale + 1, 1))


def test_children_match_brute_force():
    J = 6
    fs = [spiky(1, J, 3)]
    v = spiky(1, J, 4)
    s = (1, 2)
    c = build_sparse(fs, s, 1, v, TOP1)
    tracked = list(zip(fs + [v], s))
    for gen, nxt in zip(c.generations, c.generations[1:] + [[]]):
        expect = set()
        for Q in gen:
            expect |= set(brute_children(Q, tracked, J, 8.0))
        assert expect == set(nxt)
    assert len(c.generations) >= 2


def test_constant_inputs_single_cube():
    J = 5
    one = GridFunction.constant(1, J)
    c = build_sparse([one, one], (1, 1, 1), 1, one, TOP1)
    assert c.cubes == [TOP1] and c.witnesses[TOP1].all()
    assert sparse_form(c, [one, one], (1, 1, 1), 1, one) == pytest.approx(1.0)


def test_construction_error():
    J = 6
    # three cells in four are hot, so the children cover 3/4 of the top
    x = np.full(64, 50.0)
    x[3::4] = 1.0
    f = GridFunction(1, J, x)
    with pytest.raises(SparseConstructionError):
        build_sparse([f], (1, 1), 1, f, TOP1, C=1.01)


def test_sparse_form_oracle():
    J = 6
    fs = [spiky(1, J, 5), spiky(1, J, 6)]
    v = spiky(1, J, 7)
    s, q = (2, 3, 1), 1.5
    c = build_sparse(fs, s, q, v, TOP1)
    ref = 0.0
    for Q in c.cubes:
        term = float(Q.measure)
        for h, e in zip(fs + [v], s):
            term *= avg(h, Q, J, e) ** q
        ref += term
    assert sparse_form(c, fs, s, q, v) == pytest.approx(ref, rel=1e-12)
    zero = GridFunction.constant(1, J, 0.0)
    assert sparse_domination_ratio(zero, c, fs, s, q, v) == 0.0


def test_carleson_packing_brute_force():
    J = 6
    c = build_sparse([spiky(1, J, 8)], (1, 1), 1, spiky(1, J, 9), TOP1)
    best = F(0)
    for j in range(0, -J - 1, -1):
        for Q0 in all_cubes(1, j):
            tot = sum(Q.measure for Q in c.cubes if Q.within(Q0))
            best = max(best, tot / Q0.measure)
    assert carleson_packing(c) == best
    assert carleson_packing(SparseCollection(1, J, F(1, 2))) == 0


def test_verify_detects_violations():
    J = 3
    Q, P = TOP1, DyadicCube(1, -1, (0,))
    full = np.ones(8, bool)
    half = np.zeros(8, bool)
    half[4:] = True
    c = SparseCollection(1, J, F(1, 2), [Q], {Q: full})
    assert verify_sparse(c)
    c.cubes.append(P)
    c.witnesses[P] = np.r_[np.ones(4, bool), np.zeros(4, bool)]
    chk = verify_sparse(c)
    assert not chk and chk.reason == "witnesses overlap"
    c.witnesses[Q] = half
    assert verify_sparse(c)
    c.witnesses[P] = np.r_[np.zeros(4, bool), np.ones(4, bool)]
    assert verify_sparse(c).reason == "witness leaves its cube"
    c.witnesses[P] = np.r_[np.ones(1, bool), np.zeros(7, bool)]
    assert verify_sparse(c).reason == "witness below eta |Q|"
    c3 = SparseCollection(1, J, F(3, 4), [Q, P], {Q: half, P: ~half})
    assert verify_sparse(c3).reason in ("witness below eta |Q|", "children exceed (1 - eta) |Q|")
    with pytest.raises(ValueError):
        SparseCollection(1, J, 0)


def test_json_roundtrip():
    J = 5
    c = build_sparse([spiky(1, J, 10)], (1, 1), 1, spiky(1, J, 11), TOP1)
    d = SparseCollection.from_json(c.to_json())
    assert d.cubes == c.cubes and d.eta == c.eta
    for Q in c.cubes:
        assert np.array_equal(d.witnesses[Q], c.witnesses[Q])


def test_two_dimensional():
    J = 4
    top = DyadicCube(2, 0, (0, 0))
    c = build_sparse([spiky(2, J, 12)], (1, 1), 1, spiky(2, J, 13), top)
    assert verify_sparse(c)
    assert carleson_packing(c) <= 2
