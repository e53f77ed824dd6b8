import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from helicoid.dyadic import DyadicCube
from helicoid.errors import DivergenceError, InvalidExponentError, UnsupportedMapError
from helicoid.exponents import CoordinateProjection
from helicoid.gridfn import GridFunction, random_dyadic_indicator
from helicoid.maximal import (
    NONE,
    DyadicFamily,
    StoppingTime,
    endpoint_constant,
    fefferman_stein_ratio,
    lift,
    linearized_maximal,
    local_maximal_estimate,
    maximal_projection_commute,
    multi_maximal,
    weak_type_sum,
)


def rand_pos(d, J, seed, weights=()):
    rng = np.random.default_rng(seed)
    shape = (1 << J,) * d + tuple(len(w) for w in weights)
    return GridFunction(d, J, rng.random(shape) ** 3, weights)


def brute_maximal_1d(fs, s, scales, offset=0):
    """Loop over every translated dyadic interval containing each point."""
    N = fs[0].N
    out = np.zeros(N)
    for x in range(N):
        for j in scales:
            side = N >> -j
            start = ((x - offset) // side) * side + offset
            cells = [(start + t) % N for t in range(side)]
            v = 1.0
            for f, e in zip(fs, s):
                v *= np.mean(np.abs(f.samples[cells]) ** e) ** (1 / e)
            out[x] = max(out[x], v)
    return out


@pytest.mark.parametrize("offset", [0, 3])
def test_multi_maximal_brute_force(offset):
    J = 6
    fs = [rand_pos(1, J, 0), rand_pos(1, J, 1)]
    s = (1, 2.5)
    fam = DyadicFamily(1, (0, -1, -3, -5), (offset,))
    got = multi_maximal(fs, s, fam).samples
    assert np.allclose(got, brute_maximal_1d(fs, s, fam.scales, offset), rtol=1e-12)


def test_multi_maximal_2d_direct():
    J = 4
    f = rand_pos(2, J, 2)
    got = multi_maximal([f], [2], DyadicFamily.full(2, J)).samples
    a = np.abs(f.samples) ** 2
    N = 16
    for x, y in itertools.product(range(0, N, 5), repeat=2):
        best = 0.0
        for lev in range(J + 1):
            side = N >> lev
            bx, by = (x // side) * side, (y // side) * side
            best = max(best, a[bx:bx + side, by:by + side].mean() ** 0.5)
        assert got[x, y] == pytest.approx(best, rel=1e-12)


def test_vector_valued_componentwise():
    J = 5
    w = np.array([1.0, 0.5])
    f = rand_pos(1, J, 3, (w,))
    g = rand_pos(1, J, 4)
    fam = DyadicFamily.full(1, J)
    out = multi_maximal([f, g], (1, 1), fam)
    for k in range(2):
        ref = multi_maximal([GridFunction(1, J, f.samples[:, k]), g], (1, 1), fam)
        assert np.allclose(out.samples[:, k], ref.samples)
    assert out.weights and np.allclose(out.weights[0], w)


def test_exponent_and_family_checks():
    f = rand_pos(1, 4, 0)
    with pytest.raises(InvalidExponentError):
        multi_maximal([f], ["inf"], DyadicFamily.full(1, 4))
    with pytest.raises(ValueError):
        DyadicFamily(1, ())
    with pytest.raises(ValueError):
        DyadicFamily(1, (1,))
    with pytest.raises(ValueError):
        StoppingTime(np.full(16, -9), DyadicFamily.full(1, 4))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_linearization_below_maximal(seed):
    J = 5
    rng = np.random.default_rng(seed)
    fs = [rand_pos(1, J, seed), rand_pos(1, J, seed + 1)]
    fam = DyadicFamily.full(1, J)
    Mf = multi_maximal(fs, (1, 2), fam).samples
    kap = StoppingTime.random((1 << J,), fam, rng)
    lin = linearized_maximal(fs, (1, 2), kap).samples
    assert (lin <= Mf * (1 + 1e-12)).all()
    arg = linearized_maximal(fs, (1, 2), StoppingTime.argmax(fs, (1, 2), fam)).samples
    assert np.allclose(arg, Mf, rtol=1e-12)


def test_none_and_localization():
    J = 5
    fs = [rand_pos(1, J, 5)]
    fam = DyadicFamily.full(1, J)
    assert np.all(linearized_maximal(fs, [1], StoppingTime.none((32,), fam)).samples == 0)
    assert NONE > 0
    R0 = DyadicCube(1, -2, (1,))
    lin = linearized_maximal(fs, [1], StoppingTime.argmax(fs, [1], fam), R0).samples
    outside = np.ones(32, bool)
    outside[8:16] = False
    assert np.all(lin[outside] == 0)
    # inside R0 only cubes at scale <= -2 survive; the argmax may pick coarser ones
    assert np.all(lin[8:16] >= 0)


def test_local_maximal_translation_invariant():
    J = 6
    rng = np.random.default_rng(7)
    fs = [rand_pos(1, J, 8), rand_pos(1, J, 9)]
    E = random_dyadic_indicator(1, J, 4, 0.5, rng)
    fam = DyadicFamily.full(1, J)
    R0 = DyadicCube(1, -2, (0,))
    r = local_maximal_estimate(fs, E, (1, 1), 1, R0, fam)
    assert 0 < r < np.inf
    sh = 1 << (J - 2)
    roll = lambda g: GridFunction(1, J, np.roll(g.samples, sh))
    r2 = local_maximal_estimate([roll(f) for f in fs], roll(E), (1, 1), 1, DyadicCube(1, -2, (1,)), fam)
    assert r2 == pytest.approx(r, rel=1e-12)
    worst, all_r = local_maximal_estimate(fs, E, (1, 1), 1, R0, fam, np.random.default_rng(0), 8,
                                          return_all=True)
    assert worst == max(all_r) and len(all_r) == 9


# --- endpoint sum --------------------------------------------------------

def test_endpoint_constant_formula():
    q, s1, s2 = 1.0, 3.0, 3.0
    a = b = 1 / 3
    g = lambda r: 1 / (1 - 2 ** -r)
    expect = (g(s1 - q) + g(q)) * (g(s2 * (1 - a - b)) + g(q)) * g(a + b)
    assert endpoint_constant(q, s1, s2) == pytest.approx(expect)
    with pytest.raises(DivergenceError):
        endpoint_constant(1, 2, 2)


def _direct(q, s, A, S0, R=70):
    z0 = math.ceil(-math.log2(S0) - 1e-12)
    tot = 0.0
    x = np.arange(-R, R + 1, dtype=float)[:, None, None]
    y = np.arange(-R, R + 1, dtype=float)[None, :, None]
    z = np.arange(z0, z0 + 2 * R, dtype=float)[None, None, :]
    m = np.minimum(np.minimum(np.exp2(s[0] * x) * A[0], np.exp2(s[1] * y) * A[1]), np.exp2(z) * A[2])
    tot = float((np.exp2(-q * x - q * y - z) * m).sum())
    return tot


@pytest.mark.parametrize("A,S0", [((1, 1, 1), 1.0), ((2.0, 0.3, 5.0), 0.25), ((0.01, 4.0, 1.0), 0.7)])
def test_weak_type_sum_encloses_direct_sum(A, S0):
    q, s = 1.0, (3.0, 3.0)
    res = weak_type_sum(q, s, A, S0)
    ref = _direct(q, s, A, S0)
    assert res.value <= ref * (1 + 1e-9)
    assert ref <= (res.value + res.tail) * (1 + 1e-9)
    assert res.ok and res.ratio <= res.constant


def test_weak_type_sum_edge_cases():
    assert weak_type_sum(1, (3, 3), (0, 1, 1), 1.0).value == 0
    with pytest.raises(DivergenceError):
        weak_type_sum(1, (2, 2), (1, 1, 1), 1.0)


@settings(max_examples=25, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3), st.floats(0.05, 1.0))
def test_weak_type_bound_holds(l1, l2, l3, S0):
    res = weak_type_sum(1, (3, 4), (10 ** l1, 10 ** l2, 10 ** l3), S0)
    assert res.ok


# --- projections ---------------------------------------------------------

@pytest.mark.parametrize("retained", [(0,), (1, 2), (2, 0)])
def test_projection_commutes(retained):
    J = 3
    P = CoordinateProjection(3, retained)
    f = rand_pos(len(retained), J, 11)
    ratio = maximal_projection_commute(f, P, 3, s=2)
    assert np.allclose(ratio, 1.0, rtol=1e-12)


def test_lift_values():
    f = rand_pos(1, 3, 12)
    g = lift(f, CoordinateProjection(2, (1,)))
    assert np.allclose(g.samples, np.broadcast_to(f.samples[None, :], (8, 8)))
    with pytest.raises(UnsupportedMapError):
        maximal_projection_commute(f, [[1, 1]], 2)


def test_fefferman_stein_self():
    J = 5
    fs = [rand_pos(1, J, 13), rand_pos(1, J, 14)]
    Mf = multi_maximal(fs, (1, 1), DyadicFamily.full(1, J))
    assert fefferman_stein_ratio(Mf, fs, (1, 1), 2) == pytest.approx(1.0)
    zero = GridFunction.constant(1, J, 0.0)
    assert fefferman_stein_ratio(zero, [zero], [1], 1) == 0.0


def test_weak_type_scaling_law():
    q, s = 1.0, (3.0, 3.0)
    a = weak_type_sum(q, s, (0.5, 2.0, 1.0), 0.5)
    b = weak_type_sum(q, s, (0.5 * 2 ** s[0], 2.0, 1.0), 0.5)
    assert b.bound == pytest.approx(a.bound * 2 ** q, rel=1e-12)
    assert a.ok and b.ok


def test_local_maximal_trivial_cases():
    J = 5
    fam = DyadicFamily.full(1, J)
    R0 = DyadicCube(1, -1, (1,))
    E = GridFunction(1, J, np.r_[np.zeros(16), np.ones(16)])
    zero = GridFunction.constant(1, J, 0.0)
    assert local_maximal_estimate([zero, zero], E, (1, 1), 1, R0, fam, weight="indicator") == 0.0
    one = GridFunction.constant(1, J)
    r = local_maximal_estimate([one, one], E, (1, 1), 1, R0, fam, weight="indicator")
    assert r == pytest.approx(1.0, rel=1e-12)


def test_identity_projection():
    f = rand_pos(2, 3, 15)
    ratio = maximal_projection_commute(f, CoordinateProjection(2, (0, 1)), 2)
    assert (ratio <= 1 + 1e-12).all()
