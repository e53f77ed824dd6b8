import csv
import io
import itertools
import json
from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helicoid.errors import MalformedTupleError, RankConstraintError, UnsupportedMapError
from helicoid.exponents import (
    AlphaTuple,
    CoordinateProjection,
    ExponentTuple,
    MixedExponent,
    ThetaVector,
    alpha_from_theta,
    exponent,
    exponent_tuple,
    finner_condition,
    finner_failing_axis,
    is_brascamp_lieb_tuple,
    is_holder_tuple,
    is_local,
    max_slack,
    range_membership,
    scan_to_csv,
    theta_for_alpha,
    tuple_from_json,
    tuple_to_json,
    xi_feasible,
)

INF = "inf"


# --- Hölder and locality -------------------------------------------------

@pytest.mark.parametrize("t,expected", [((2, 2, INF), True), ((4, 4, 2), True), ((2, 3, 4), False)])
def test_holder_examples(t, expected):
    assert is_holder_tuple(t) is expected


def test_holder_arity():
    with pytest.raises(MalformedTupleError):
        is_holder_tuple([2])


def test_holder_rejects_input_exponent_one():
    # 1/p_1 = 1 is excluded even though reciprocals sum to 1
    assert not is_holder_tuple(ExponentTuple.from_recips([1, 0, 0]))


def test_local_examples():
    assert is_local((2, 2, 2), ["2/3"] * 3)
    assert not is_local((2, 2, 2), ["1/2"] * 3)
    assert is_local((INF, INF, INF), ["1/1000"] * 3)
    with pytest.raises(MalformedTupleError):
        is_local((2, 2, 2), [1, 1])


def test_exponent_parsing():
    assert exponent("inf").recip == 0
    assert exponent(float("inf")).is_infinite
    assert exponent("3/2").recip == F(2, 3)
    assert exponent(0.4).recip == F(5, 2)
    assert exponent(4).dual().recip == F(3, 4)
    with pytest.raises(MalformedTupleError):
        exponent(0)


# --- interpolation weights -----------------------------------------------

def test_alpha_from_theta_examples():
    a = alpha_from_theta(ThetaVector.from_list(2, 1, ["1/3"] * 3))
    assert a.alphas == (F(1, 3),) * 3
    corner = alpha_from_theta(ThetaVector.from_list(2, 1, [1, 0, 0]))
    assert corner.alphas == (1, 0, 0)
    assert not corner.in_open_box
    u = alpha_from_theta(ThetaVector.uniform(4, 2))
    # each slot lies in 4 of the 10 pairs
    assert u.alphas == (F(4, 10),) * 5
    assert sum(u.alphas) == 2


def test_theta_rejects_bad_weights():
    with pytest.raises(MalformedTupleError):
        ThetaVector.from_list(2, 1, ["1/2", "1/3", 0])
    with pytest.raises(RankConstraintError):
        ThetaVector.uniform(3, 2)


def _theta_strategy(n, k):
    m = len(list(itertools.combinations(range(n + 1), k)))
    return st.lists(st.integers(0, 20), min_size=m, max_size=m).filter(sum).map(
        lambda w: ThetaVector.from_list(n, k, [F(x, sum(w)) for x in w]))


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([(2, 1), (3, 1), (4, 1), (4, 2), (5, 2)]).flatmap(
    lambda nk: _theta_strategy(*nk)))
def test_alpha_sum_is_k(theta):
    a = alpha_from_theta(theta)
    assert sum(a.alphas) == theta.k


@settings(max_examples=60, deadline=None)
@given(st.sampled_from([(2, 1), (4, 2), (5, 2), (6, 3)]).flatmap(lambda nk: _theta_strategy(*nk)))
def test_theta_for_alpha_roundtrip(theta):
    a = alpha_from_theta(theta).alphas
    back = alpha_from_theta(theta_for_alpha(theta.n, theta.k, a))
    assert back.alphas == a


def test_xi_examples():
    assert xi_feasible(2, 1, ["1/3"] * 3)
    assert not xi_feasible(2, 1, [0.6, 0.2, 0.2])
    assert xi_feasible(4, 2, [0.4] * 5)
    assert xi_feasible(4, 2, [0.4] * 5, method="lp")
    with pytest.raises(RankConstraintError):
        xi_feasible(3, 2, [0.5] * 4)
    with pytest.raises(MalformedTupleError):
        xi_feasible(2, 1, [0.5, 0.5, 0.5])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(1, 15), min_size=5, max_size=5))
def test_xi_exact_matches_lp(w):
    # rescale to sum 2 for n=4, k=2
    total = sum(w)
    a = [F(2 * x, total) for x in w]
    assert xi_feasible(4, 2, a) == xi_feasible(4, 2, a, method="lp")


# --- range membership ----------------------------------------------------

def test_range_bht_point():
    dec = range_membership(2, 1, (2, 2, INF))
    assert dec
    # the quoted witness is admissible, and so is ours
    for wit in ([F(2, 5), F(2, 5), F(1, 5)], list(dec.witness.alphas)):
        assert xi_feasible(2, 1, wit)
        assert is_local((2, 2, INF), [1 - x for x in wit])
    assert alpha_from_theta(dec.theta).alphas == dec.witness.alphas


def test_range_rejects_outside():
    t = ExponentTuple.from_recips([F(3, 4), F(3, 4), F(-1, 2)])
    assert is_holder_tuple(t)
    dec = range_membership(2, 1, t)
    assert not dec and dec.witness is None
    assert not range_membership(2, 1, t, method="lp")


def test_range_non_holder_reason():
    dec = range_membership(2, 1, (2, 3, 4))
    assert not dec and "Hölder" in dec.reason


def test_range_rank_zero_accepts_holder():
    t = ExponentTuple.from_recips([F(9, 10), F(9, 10), F(-4, 5)])
    assert range_membership(2, 0, t)


def test_closed_local_l2_inclusion():
    rng = np.random.default_rng(0)
    for n, k in [(2, 1), (3, 1), (4, 2), (4, 1)]:
        accepted = 0
        while accepted < 300:
            r = [F(int(x), 64) for x in rng.integers(0, 33, n)]
            last = 1 - sum(r)
            if not 0 <= last <= F(1, 2):
                continue
            t = ExponentTuple.from_recips(r + [last])
            if not is_holder_tuple(t):
                continue
            assert range_membership(n, k, t), t
            accepted += 1


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(0, 48), min_size=2, max_size=2), st.integers(0, 3), st.integers(1, 12))
def test_monotone_by_witness_reuse(r, slot, dec):
    r = [F(x, 48) for x in r]
    t = ExponentTuple.from_recips(r + [1 - sum(r)])
    d0 = range_membership(2, 1, t)
    if not d0 or slot > 1:
        return
    # lower one input reciprocal and compensate in the last slot
    lowered = list(r)
    lowered[slot] = max(F(0), lowered[slot] - F(dec, 96))
    t2 = ExponentTuple.from_recips(lowered + [1 - sum(lowered)])
    w = d0.witness.alphas
    if is_holder_tuple(t2) and is_local(t2, [1 - a for a in w]):
        assert range_membership(2, 1, t2)


def test_lp_agrees_with_exact():
    rng = np.random.default_rng(1)
    for n, k in [(2, 1), (3, 1), (4, 2)]:
        for _ in range(25):
            r = [F(int(x), 24) for x in rng.integers(0, 24, n)]
            t = ExponentTuple.from_recips(r + [1 - sum(r)])
            a = range_membership(n, k, t)
            b = range_membership(n, k, t, method="lp")
            assert bool(a) == bool(b)
            if a:
                assert a.slack == b.slack


def _compositions(total, parts):
    """All integer vectors of length ``parts`` with entries >= 1 summing to total."""
    cuts = np.array(list(itertools.combinations(range(1, total), parts - 1)))
    edges = np.hstack([np.zeros((len(cuts), 1), int), cuts, np.full((len(cuts), 1), total)])
    return np.diff(edges, axis=1)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_grid_search_oracle(n):
    # rank one: alpha equals theta on singletons, enumerated at step 1/64
    grid = _compositions(64, n + 1)
    rng = np.random.default_rng(n)
    compared = 0
    for _ in range(60):
        r = [F(int(x), 48) for x in rng.integers(0, 40, n)]
        t = ExponentTuple.from_recips(r + [1 - sum(r)])
        if not is_holder_tuple(t):
            continue
        eps = max_slack(n, 1, t)
        if 0 < eps < F(1, 64):
            continue
        # i/64 < min(1/2, 1 - r_j) as integers: i < 64 u_j
        bound = np.array([int(-(-64 * min(F(1, 2), 1 - x) // 1)) - 1 for x in t.recips])
        hit = bool((grid <= bound).all(axis=1).any())
        assert hit == bool(range_membership(n, 1, t)), t
        compared += 1
    assert compared > 20


def test_cond2_implication_n4_k2():
    rng = np.random.default_rng(2024)
    members = 0
    for _ in range(10_000):
        r = [F(int(x), 30) for x in rng.integers(0, 30, 4)]
        t = ExponentTuple.from_recips(r + [1 - sum(r)])
        if not range_membership(4, 2, t):
            continue
        members += 1
        for i1, i2, i3 in itertools.combinations(range(4), 3):
            assert r[i1] + r[i3] < F(3, 2)
            assert r[i1] + r[i2] + r[i3] < 2
    assert members > 100


# --- Brascamp-Lieb and per-axis Hölder -----------------------------------

LW_MAPS = [{"forget": [j]} for j in range(4)]


def test_brascamp_lieb_examples():
    assert is_brascamp_lieb_tuple((3, 3, 3, 3), LW_MAPS, 4)
    assert not is_brascamp_lieb_tuple((2, 2, 2, 2), LW_MAPS, 4)
    ident = [{"retained": [0, 1]}] * 2
    assert is_brascamp_lieb_tuple((2, 2), ident, 2)


def test_brascamp_lieb_matrix_maps():
    sel = [np.delete(np.eye(4, dtype=int), j, axis=0) for j in range(4)]
    assert is_brascamp_lieb_tuple((3, 3, 3, 3), sel, 4)
    with pytest.raises(UnsupportedMapError):
        is_brascamp_lieb_tuple((2, 2), [[[1, 1]], [[1, 0]]], 2)


def test_finner_examples():
    assert finner_condition(LW_MAPS, [[3, 3, 3]] * 4, 4)
    h2 = [[2, 2, INF], [INF, 2, 2], [2, INF, 2], [2, 2, INF]]
    assert finner_condition(LW_MAPS, h2, 4)
    assert not finner_condition([{"retained": [0]}], [[2]], 1)
    assert finner_failing_axis([{"retained": [0]}, {"retained": [0, 1]}], [[2], [2, 2]], 2) == 1


def test_finner_mixed_exponent_input():
    me = MixedExponent.per_axis([3, 3, 3])
    assert finner_condition(LW_MAPS, [me] * 4, 4)
    assert CoordinateProjection.forget(4, 2).retained == (0, 1, 3)


# --- serialisation -------------------------------------------------------

def test_tuple_json_roundtrip():
    t = exponent_tuple(2, "3/2", INF)
    s = tuple_to_json(t)
    assert json.loads(s) == ["2/1", "3/2", "inf"]
    assert tuple_from_json(s) == t


def test_scan_csv():
    t = exponent_tuple(2, 2, INF)
    rows = list(csv.reader(io.StringIO(scan_to_csv([(t, range_membership(2, 1, t))]))))
    assert rows[0] == ["tuple", "member", "witness_alphas"]
    assert rows[1][1] == "1"
    assert len(json.loads(rows[1][2])) == 3


def test_alpha_tuple_invariant():
    with pytest.raises(MalformedTupleError):
        AlphaTuple(2, 1, ["1/2", "1/2", "1/2"])
