"""Multilinear dyadic maximal functions, stopping times and the endpoint sum.

The maximal function is evaluated over an explicit finite family of dyadic
cubes: every cube of the listed scales, optionally translated by a fixed
number of grid cells.  For each scale the products of averages are stacked,
so the supremum and its linearisations read from the same array.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dyadic import DyadicCube
from .errors import AnomalyError, DivergenceError, InvalidExponentError, UnsupportedMapError
from .exponents import CoordinateProjection, _as_projection, exponent
from .gridfn import (M_DEFAULT, GridFunction, NormSpec, dyadic_averages, mixed_norm,
                     restrict_vector_norm)

__all__ = [
    "NONE",
    "DyadicFamily",
    "StoppingTime",
    "scale_stack",
    "multi_maximal",
    "linearized_maximal",
    "local_maximal_estimate",
    "EndpointSum",
    "endpoint_constant",
    "weak_type_sum",
    "lift",
    "maximal_projection_commute",
    "fefferman_stein_ratio",
]

# kappa value meaning "no cube selected"; never a valid torus scale
NONE = 1


@dataclass(frozen=True)
class DyadicFamily:
    """All cubes of the given scales, translated by ``offset`` grid cells.

    Parameters
    ----------
    d : int
    scales : tuple of int
        Scales j <= 0 (cube side 2^j).
    offset : tuple of int, optional
        Translation in units of the grid spacing 1/N.
    """

    d: int
    scales: tuple
    offset: tuple = None

    def __post_init__(self):
        sc = tuple(sorted({int(j) for j in self.scales}, reverse=True))
        if not sc:
            raise ValueError("the cube family is empty")
        if sc[0] > 0:
            raise ValueError("scales must be <= 0")
        object.__setattr__(self, "scales", sc)
        off = (0,) * self.d if self.offset is None else tuple(int(o) for o in self.offset)
        if len(off) != self.d:
            raise ValueError("offset must have one entry per axis")
        object.__setattr__(self, "offset", off)

    @classmethod
    def full(cls, d: int, J: int, offset=None) -> "DyadicFamily":
        """Every scale from the whole torus down to single grid cells."""
        return cls(d, tuple(range(0, -J - 1, -1)), offset)

    @property
    def is_shifted(self) -> bool:
        return any(self.offset)


def _components(f: GridFunction) -> list:
    """Scalar functions f(., w) for every w, in C order over W."""
    if f.is_scalar:
        return [f]
    wshape = f.samples.shape[f.d:]
    flat = f.samples.reshape((f.N,) * f.d + (-1,))
    return [GridFunction(f.d, f.J, flat[..., i]) for i in range(int(np.prod(wshape)))]


def _wshape(fs) -> tuple:
    shapes = {f.samples.shape[f.d:] for f in fs if not f.is_scalar}
    if len(shapes) > 1:
        raise ValueError("vector-valued inputs must share the parameter space")
    return shapes.pop() if shapes else ()


def scale_stack(fs: Sequence[GridFunction], s: Sequence, family: DyadicFamily,
                weight="indicator", M: int = M_DEFAULT) -> np.ndarray:
    """Products of averages per scale, broadcast to grid points.

    Returns an array of shape ``(len(family.scales),) + (N,)*d + Wshape``
    whose entry [i, x, w] is prod_j ave^{s_j}_R f_j(., w) for the cube R of
    scale ``family.scales[i]`` containing x.
    """
    if len(fs) != len(s):
        raise ValueError("one exponent per function is required")
    for e in s:
        if exponent(e).recip <= 0:
            raise InvalidExponentError(f"maximal exponents must be finite and positive, got {e}")
    f0 = fs[0]
    d, J, N = f0.d, f0.J, f0.N
    if family.d != d:
        raise ValueError("family dimension differs from the functions")
    wshape = _wshape(fs)
    nw = int(np.prod(wshape)) if wshape else 1
    axes = tuple(range(d))
    comps = []
    for f in fs:
        if (f.d, f.J) != (d, J):
            raise ValueError("functions live on different grids")
        cs = _components(f)
        if family.is_shifted:
            cs = [GridFunction(d, J, np.roll(c.samples, tuple(-o for o in family.offset), axis=axes))
                  for c in cs]
        comps.append(cs if len(cs) == nw else cs * nw)
    out = np.empty((len(family.scales),) + (N,) * d + (nw,))
    for i, j in enumerate(family.scales):
        side = N >> (-j)
        for w in range(nw):
            prod = None
            for cs, e in zip(comps, s):
                tab = dyadic_averages(cs[w], j, e, weight, M)
                prod = tab if prod is None else prod * tab
            for ax in range(d):
                prod = np.repeat(prod, side, axis=ax)
            out[(i,) + (slice(None),) * d + (w,)] = prod
    if family.is_shifted:
        out = np.roll(out, family.offset, axis=tuple(range(1, d + 1)))
    return out.reshape((len(family.scales),) + (N,) * d + wshape)


def _wrap(f0: GridFunction, values, fs) -> GridFunction:
    weights = next((f.weights for f in fs if not f.is_scalar), ())
    return GridFunction(f0.d, f0.J, values, weights)


def multi_maximal(fs: Sequence[GridFunction], s: Sequence, family: DyadicFamily,
                  weight="indicator", M: int = M_DEFAULT) -> GridFunction:
    """sup over cubes R of the family containing x of prod_j ave^{s_j}_R f_j(., w)."""
    stack = scale_stack(fs, s, family, weight, M)
    return _wrap(fs[0], stack.max(axis=0), fs)


@dataclass(frozen=True, eq=False)
class StoppingTime:
    """Selected scale per (x, w); :data:`NONE` where nothing is selected.

    Attributes
    ----------
    kappa : ndarray of int
        Shape ``(N,)*d + Wshape``.
    family : DyadicFamily
    """

    kappa: np.ndarray
    family: DyadicFamily

    def __post_init__(self):
        k = np.asarray(self.kappa, dtype=np.int64)
        ok = np.isin(k, list(self.family.scales) + [NONE])
        if not ok.all():
            raise ValueError("kappa selects a scale outside the cube family")
        k = k.copy()
        k.setflags(write=False)
        object.__setattr__(self, "kappa", k)

    @classmethod
    def argmax(cls, fs, s, family, weight="indicator", M: int = M_DEFAULT) -> "StoppingTime":
        """Scale attaining the supremum (the coarsest one among ties)."""
        stack = scale_stack(fs, s, family, weight, M)
        pick = np.asarray(family.scales)[np.argmax(stack, axis=0)]
        return cls(pick, family)

    @classmethod
    def none(cls, shape, family) -> "StoppingTime":
        return cls(np.full(shape, NONE), family)

    @classmethod
    def random(cls, shape, family, rng: np.random.Generator, localization: DyadicCube | None = None
               ) -> "StoppingTime":
        """Uniform choice among admissible scales at every point."""
        scales = np.asarray(family.scales)
        if localization is not None:
            scales = scales[scales <= localization.scale]
            if scales.size == 0:
                return cls.none(shape, family)
        return cls(scales[rng.integers(0, scales.size, size=shape)], family)


def _localization_mask(d, J, scale_grid, loc: DyadicCube | None, offset) -> np.ndarray:
    """Points whose selected cube lies inside ``loc`` (or its lower-dimensional version)."""
    if loc is None:
        return np.ones(scale_grid.shape, dtype=bool)
    N = 1 << J
    dp = loc.dim
    idx = np.indices((N,) * d)
    ok = scale_grid <= loc.scale
    side0 = N >> (-loc.scale)
    for ax in range(dp):
        coord = (idx[ax] - offset[ax]) % N
        if any(offset):
            raise ValueError("localization is only defined for the unshifted family")
        inside = (coord // side0) == loc.corner[ax]
        ok &= inside.reshape(inside.shape + (1,) * (scale_grid.ndim - d))
    return ok


def linearized_maximal(fs: Sequence[GridFunction], s: Sequence, kappa: StoppingTime,
                       localization: DyadicCube | None = None, weight="indicator",
                       M: int = M_DEFAULT) -> GridFunction:
    """The single term selected by kappa, zero where kappa is NONE or leaves the localization.

    ``localization`` may be a cube in R^d or, for d' < d, a cube in R^{d'}
    constraining the first d' coordinates.
    """
    family = kappa.family
    stack = scale_stack(fs, s, family, weight, M)
    scales = list(family.scales)
    k = kappa.kappa
    if k.shape != stack.shape[1:]:
        raise ValueError(f"kappa shape {k.shape} does not match {stack.shape[1:]}")
    valid = k != NONE
    pos = np.zeros(k.shape, dtype=np.int64)
    for i, j in enumerate(scales):
        pos[k == j] = i
    vals = np.take_along_axis(stack, pos[None], axis=0)[0]
    f0 = fs[0]
    mask = valid & _localization_mask(f0.d, f0.J, k, localization, family.offset)
    return _wrap(f0, np.where(mask, vals, 0.0), fs)


def _size_tilde(g: GridFunction, R0: DyadicCube, family: DyadicFamily, p, weight, M) -> float:
    best = 0.0
    for j in family.scales:
        if j > R0.scale:
            continue
        tab = dyadic_averages(g, j, p, weight, M)
        sh = R0.scale - j
        sl = tuple(slice(c << sh, (c + 1) << sh) for c in R0.corner)
        best = max(best, float(tab[sl].max()))
    return max(best, float(dyadic_averages(g, R0.scale, p, weight, M)[tuple(R0.corner)]))


def local_maximal_estimate(fs: Sequence[GridFunction], E: GridFunction, s: Sequence, q, R0: DyadicCube,
                           family: DyadicFamily, rng: np.random.Generator | None = None,
                           n_random: int = 32, vector_in: Sequence = (), vector_out: Sequence = (),
                           weight="chi_tilde", M: int = M_DEFAULT, return_all: bool = False):
    """Worst ratio of the local maximal estimate over adversarial stopping times.

    LHS: || ||M^{kappa, R0}(f)||_{L^{R'}_W} 1_E ||_{L^q}.
    RHS: prod_j size~^{s_j}_{R0} ||f_j||_{L^{R_j}_W} * (size~_{R0} 1_E)^{1/q} * |R0|^{1/q}.

    kappa runs over the argmax stopping time and ``n_random`` uniform ones.
    """
    qf = float(exponent(q).p)
    f0 = fs[0]
    shape = (f0.N,) * f0.d + _wshape(fs)
    family = DyadicFamily(family.d, tuple(j for j in family.scales if j <= R0.scale) or (R0.scale,),
                          family.offset)
    kappas = [StoppingTime.argmax(fs, s, family, weight, M)]
    if rng is not None:
        kappas += [StoppingTime.random(shape, family, rng, R0) for _ in range(n_random)]
    scal = [restrict_vector_norm(f, vector_in[i] if vector_in else ()) if not f.is_scalar else f
            for i, f in enumerate(fs)]
    rhs = float(R0.measure) ** (1 / qf)
    for g, e in zip(scal, s):
        rhs *= _size_tilde(g, R0, family, e, weight, M)
    rhs *= _size_tilde(E, R0, family, 1, weight, M) ** (1 / qf)
    ratios = []
    for kap in kappas:
        Mk = linearized_maximal(fs, s, kap, R0, weight, M)
        if not Mk.is_scalar:
            Mk = restrict_vector_norm(Mk, vector_out)
        lhs = mixed_norm(Mk * E, NormSpec.uniform(f0.d, q))
        if rhs == 0.0:
            if lhs > 1e-14:
                raise AnomalyError("nonzero maximal form with vanishing sizes")
            ratios.append(0.0)
        else:
            ratios.append(lhs / rhs)
    worst = max(ratios)
    return (worst, ratios) if return_all else worst


# ---------------------------------------------------------------------------
# endpoint summation

@dataclass(frozen=True)
class EndpointSum:
    """Truncated direct sum with a certified tail, against C * bound.

    Attributes
    ----------
    value : float
        Sum over the truncation box (a lower bound for the full sum).
    tail : float
        Certified upper bound for the sum outside the box.
    bound : float
        A1^{q/s1} A2^{q/s2} A3^{1-q/s1-q/s2} S0^{q/s1+q/s2}.
    constant : float
        The constant C, depending only on (q, s1, s2).
    ok : bool
        value + tail <= constant * bound.
    """

    value: float
    tail: float
    bound: float
    constant: float
    ok: bool

    @property
    def ratio(self) -> float:
        return 0.0 if self.bound == 0 else (self.value + self.tail) / self.bound


def _geo(r: float) -> float:
    """1 / (1 - 2^{-r}) for r > 0."""
    return 1.0 / (1.0 - 2.0 ** (-r))


def endpoint_constant(q: float, s1: float, s2: float) -> float:
    """C = G1 G2 G3 from three nested geometric crossover sums.

    Summing over n1 first, then n2, then n3 >= -log2 S0 bounds the sum by
    C A1^a A2^b A3^{1-a-b} S0^{a+b} with a = q/s1, b = q/s2.
    """
    a, b = q / s1, q / s2
    if a + b >= 1:
        raise DivergenceError(f"q/s1 + q/s2 = {a + b} >= 1: the sum diverges")
    g1 = _geo(s1 - q) + _geo(q)
    g2 = _geo(s2 * (1 - a - b)) + _geo(q)
    g3 = _geo(a + b)
    return g1 * g2 * g3


def weak_type_sum(q, s: Sequence, A: Sequence, S0: float, half_width: int = 30) -> EndpointSum:
    """Evaluate sum_{n1, n2, n3: 2^{-n3} <= S0} 2^{-q n1 - q n2 - n3} min(2^{s1 n1} A1, 2^{s2 n2} A2, 2^{n3} A3).

    The box is centred on the crossovers of the minimum; everything outside
    it is bounded by explicit geometric series.

    Raises
    ------
    DivergenceError
        If q/s1 + q/s2 >= 1.
    """
    q = float(q)
    s1, s2 = (float(x) for x in s)
    A1, A2, A3 = (float(x) for x in A)
    C = endpoint_constant(q, s1, s2)
    a, b = q / s1, q / s2
    c = 1 - a - b
    if min(A1, A2, A3) == 0.0:
        return EndpointSum(0.0, 0.0, 0.0, C, True)
    bound = A1 ** a * A2 ** b * A3 ** c * S0 ** (a + b)
    H = int(half_width)
    z0 = math.ceil(-math.log2(S0) - 1e-12)
    zhi = z0 + 2 * H
    # crossovers 2^{s1 x} A1 = 2^z A3 at the ends of the z range
    x_lo = math.floor((z0 + math.log2(A3 / A1)) / s1) - H
    x_hi = math.ceil((zhi + math.log2(A3 / A1)) / s1) + H
    y_lo = math.floor((z0 + math.log2(A3 / A2)) / s2) - H
    y_hi = math.ceil((zhi + math.log2(A3 / A2)) / s2) + H
    x = np.arange(x_lo, x_hi + 1, dtype=float)[:, None, None]
    y = np.arange(y_lo, y_hi + 1, dtype=float)[None, :, None]
    z = np.arange(z0, zhi + 1, dtype=float)[None, None, :]
    m = np.minimum(np.minimum(np.exp2(s1 * x) * A1, np.exp2(s2 * y) * A2), np.exp2(z) * A3)
    value = float((np.exp2(-q * x - q * y - z) * m).sum())
    # tail 1: z beyond the box, summed over all x, y
    g1 = _geo(s1 - q) + _geo(q)
    e2 = s2 * (1 - a) - q
    g2 = _geo(e2) + _geo(q)
    t1 = g1 * g2 * A1 ** a * A2 ** b * A3 ** c * 2.0 ** (-(zhi + 1) * (a + b)) * _geo(a + b)
    # tail 2: z in box, y outside, all x; the x sum is at most g1 A1^a B^{1-a}
    zz = np.arange(z0, zhi + 1, dtype=float)
    t2_low = g1 * A1 ** a * A2 ** (1 - a) * 2.0 ** (e2 * (y_lo - 1)) * _geo(e2) * float(np.exp2(-zz).sum())
    t2_high = (g1 * A1 ** a * 2.0 ** (-q * (y_hi + 1)) * _geo(q)
               * float((np.exp2(-zz) * (np.exp2(zz) * A3) ** (1 - a)).sum()))
    # tail 3: (y, z) in box, x outside
    yy = y[0]
    zb = z[0]
    B = np.minimum(np.exp2(s2 * yy) * A2, np.exp2(zb) * A3)
    wyz = np.exp2(-q * yy - zb)
    t3_low = A1 * 2.0 ** ((s1 - q) * (x_lo - 1)) * _geo(s1 - q) * float(wyz.sum())
    t3_high = 2.0 ** (-q * (x_hi + 1)) * _geo(q) * float((wyz * B).sum())
    tail = (t1 + t2_low + t2_high + t3_low + t3_high) * (1 + 1e-12)
    ok = value + tail <= C * bound * (1 + 1e-12)
    return EndpointSum(value, tail, bound, C, bool(ok))


# ---------------------------------------------------------------------------
# projections and Fefferman-Stein comparisons

def lift(f: GridFunction, P: CoordinateProjection) -> GridFunction:
    """f o P as a function on the d-dimensional grid."""
    d = P.d
    arr = np.asarray(f.samples)
    # put retained axes in ascending order
    order = np.argsort(P.retained)
    arr = np.transpose(arr, order)
    kept = sorted(P.retained)
    shape = [1] * d
    for ax in kept:
        shape[ax] = f.N
    arr = arr.reshape(shape)
    return GridFunction(d, f.J, np.broadcast_to(arr, (f.N,) * d))


def maximal_projection_commute(f: GridFunction, L, d: int, s=1, weight="indicator",
                               M: int = M_DEFAULT) -> np.ndarray:
    """Pointwise ratio M^d_s(f o L)(x) / M^{d_j}_s f(L x) on the d-dimensional grid.

    Only coordinate projections are supported.
    """
    P = _as_projection(L, d)
    if P.target_dim == 0:
        raise UnsupportedMapError("the map is not surjective onto a positive-dimensional space")
    if P.target_dim != f.d:
        raise ValueError(f"f lives in dimension {f.d}, the map targets {P.target_dim}")
    lifted = lift(f, P)
    big = multi_maximal([lifted], [s], DyadicFamily.full(d, f.J), weight, M).samples
    small = multi_maximal([f], [s], DyadicFamily.full(f.d, f.J), weight, M)
    rhs = lift(small, P).samples
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(rhs > 0, big / np.where(rhs > 0, rhs, 1.0), 0.0)
    if ((rhs == 0) & (big > 1e-14)).any():
        raise AnomalyError("maximal function of the lift is nonzero where the projected one vanishes")
    return ratio


def fefferman_stein_ratio(g: GridFunction, fs: Sequence[GridFunction], s: Sequence, q,
                          family: DyadicFamily | None = None, weight="indicator",
                          M: int = M_DEFAULT) -> float:
    """||g||_q / ||M_{s}(|f_1|, ..., |f_n|)||_q with scalar (already normed) inputs."""
    f0 = fs[0]
    family = family or DyadicFamily.full(f0.d, f0.J)
    spec = NormSpec.uniform(f0.d, q)
    num = mixed_norm(g, spec)
    den = mixed_norm(multi_maximal([abs(f) for f in fs], s, family, weight, M), spec)
    if den == 0.0:
        if num > 1e-14:
            raise AnomalyError("nonzero output with a vanishing maximal function")
        return 0.0
    return num / den
