"""Sampled functions on the d-torus, optionally vector valued.

A :class:`GridFunction` stores samples at the points i / N, N = 2^J, along
each axis, followed by one array axis per factor of a finite measure space
W = W_1 x ... x W_m.  Spatial integrals are Riemann sums with weight 1/N
per axis step.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dyadic import DyadicCube, TileCollection
from .errors import InvalidExponentError, MalformedTupleError, ResolutionError, UndefinedSizeError
from .exponents import LebesgueExponent, MixedExponent, exponent

__all__ = [
    "M_DEFAULT",
    "GridFunction",
    "NormSpec",
    "mixed_norm",
    "restrict_vector_norm",
    "ave",
    "dyadic_averages",
    "spatial_size",
    "chi_tilde",
    "bandlimited_field",
    "random_dyadic_indicator",
    "dyadic_indicator",
]

M_DEFAULT = 100


def _as_exponent(p) -> LebesgueExponent:
    try:
        e = exponent(p)
    except MalformedTupleError as exc:
        raise InvalidExponentError(str(exc)) from exc
    if e.recip < 0:
        raise InvalidExponentError(f"exponent p = {e} must be positive")
    return e


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Complex samples on the torus grid of resolution 2^J.

    Parameters
    ----------
    d : int
    J : int
    samples : array_like
        Shape ``(N,)*d + tuple(len(w) for w in weights)``.
    weights : sequence of array_like, optional
        Point masses of each factor of W, all positive.  Empty for scalar
        functions, which is the same as a single point of mass one.
    """

    d: int
    J: int
    samples: np.ndarray
    weights: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        weights = tuple(np.asarray(w, dtype=float).reshape(-1) for w in self.weights)
        for w in weights:
            if w.size == 0 or (w <= 0).any():
                raise ValueError("vector-parameter masses must be positive")
        shape = (self.N,) * self.d + tuple(w.size for w in weights)
        arr = np.asarray(self.samples)
        if arr.dtype.kind not in "fc":
            arr = arr.astype(float)
        if arr.shape != shape:
            raise ValueError(f"samples have shape {arr.shape}, expected {shape}")
        arr = arr.copy()
        arr.setflags(write=False)
        for w in weights:
            w.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "weights", weights)

    @property
    def N(self) -> int:
        return 1 << self.J

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def is_scalar(self) -> bool:
        return not self.weights

    @classmethod
    def constant(cls, d, J, value=1.0) -> "GridFunction":
        return cls(d, J, np.full((1 << J,) * d, value))

    @classmethod
    def from_callable(cls, d, J, fn) -> "GridFunction":
        """Sample ``fn(*coords)`` on the grid; coords are arrays in [0, 1)."""
        x = np.arange(1 << J) / (1 << J)
        grids = np.meshgrid(*([x] * d), indexing="ij")
        return cls(d, J, np.asarray(fn(*grids)) * np.ones((1 << J,) * d))

    def points(self) -> list:
        x = np.arange(self.N) / self.N
        return np.meshgrid(*([x] * self.d), indexing="ij")

    def with_samples(self, samples) -> "GridFunction":
        return GridFunction(self.d, self.J, samples, self.weights)

    def __mul__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return self.with_samples(self.samples * other.samples)
        return self.with_samples(self.samples * other)

    __rmul__ = __mul__

    def __add__(self, other):
        if isinstance(other, GridFunction):
            self._check_compatible(other)
            return self.with_samples(self.samples + other.samples)
        return self.with_samples(self.samples + other)

    def __abs__(self):
        return self.with_samples(np.abs(self.samples))

    def _check_compatible(self, other):
        if (self.d, self.J) != (other.d, other.J):
            raise ResolutionError(f"grid ({self.d}, {self.J}) vs ({other.d}, {other.J})")

    def spectrum(self) -> np.ndarray:
        """Normalized DFT over the spatial axes: fhat(m) = N^{-d} sum f(x) e^{-2 pi i m x}."""
        axes = tuple(range(self.d))
        return np.fft.fftn(self.samples, axes=axes) / self.N ** self.d

    @classmethod
    def from_spectrum(cls, d, J, fhat, weights=()) -> "GridFunction":
        axes = tuple(range(d))
        return cls(d, J, np.fft.ifftn(fhat, axes=axes) * (1 << J) ** d, weights)

    def refine(self, J: int) -> "GridFunction":
        """Evaluate the trigonometric interpolant on the finer grid 2^J.

        Frequencies are read in [-N/2, N/2), so band-limited data are
        reproduced exactly.
        """
        if J < self.J:
            raise ResolutionError("refine only goes to finer grids")
        fhat = self.spectrum()
        N, M = self.N, 1 << J
        idx = np.fft.fftfreq(N, 1 / N).astype(int) % M
        out = np.zeros((M,) * self.d + fhat.shape[self.d:], dtype=complex)
        out[np.ix_(*([idx] * self.d))] = fhat
        res = GridFunction.from_spectrum(self.d, J, out, self.weights)
        if np.isrealobj(self.samples):
            res = res.with_samples(res.samples.real)
        return res

    def save(self, path) -> None:
        """Write raw little-endian complex64 samples plus a JSON sidecar."""
        path = Path(path)
        np.asarray(self.samples, dtype="<c8").tofile(path.with_suffix(".bin"))
        meta = {"d": self.d, "J": self.J, "weights": [w.tolist() for w in self.weights]}
        path.with_suffix(".json").write_text(json.dumps(meta))

    @classmethod
    def load(cls, path) -> "GridFunction":
        path = Path(path)
        meta = json.loads(path.with_suffix(".json").read_text())
        d, J = int(meta["d"]), int(meta["J"])
        weights = tuple(np.asarray(w) for w in meta["weights"])
        shape = (1 << J,) * d + tuple(w.size for w in weights)
        raw = np.fromfile(path.with_suffix(".bin"), dtype="<c8")
        if raw.size != int(np.prod(shape)):
            raise ValueError("sample file does not match the sidecar shape")
        return cls(d, J, raw.reshape(shape).astype(complex), weights)

    def to_csv(self) -> str:
        """Sample listing for small scalar functions: coordinates then real, imag."""
        if not self.is_scalar or self.d > 3:
            raise ValueError("CSV export is for scalar functions with d <= 3")
        cols = [f"x{i + 1}" for i in range(self.d)] + ["re", "im"]
        lines = [",".join(cols)]
        for idx in np.ndindex(*self.samples.shape):
            v = complex(self.samples[idx])
            lines.append(",".join([*(f"{i / self.N:.17g}" for i in idx), repr(v.real), repr(v.imag)]))
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class NormSpec:
    """Spatial mixed exponent plus one exponent per factor of W.

    Parameters
    ----------
    spatial : MixedExponent
        Outermost block first; blocks cover the axes in order.
    vector : sequence of LebesgueExponent
        Outermost factor first.
    """

    spatial: MixedExponent
    vector: tuple = ()

    def __post_init__(self):
        sp = self.spatial
        if not isinstance(sp, MixedExponent):
            sp = MixedExponent.per_axis(sp)
        object.__setattr__(self, "spatial", sp)
        object.__setattr__(self, "vector", tuple(_as_exponent(p) for p in self.vector))
        for _, p in sp.groups:
            _as_exponent(p)

    @classmethod
    def uniform(cls, d, p, vector=()) -> "NormSpec":
        return cls(MixedExponent(((d, exponent(p)),)), tuple(vector))


def _lp_reduce(a: np.ndarray, axes: tuple, p: LebesgueExponent, mass) -> np.ndarray:
    """L^p over ``axes`` of a nonnegative array, point masses broadcast in ``mass``."""
    if p.is_infinite:
        return a.max(axis=axes)
    pf = float(1 / p.recip)
    if pf == 1.0:
        return (a * mass).sum(axis=axes)
    return ((a ** pf) * mass).sum(axis=axes) ** (1.0 / pf)


def _vector_reduce(f: GridFunction, vector: Sequence) -> np.ndarray:
    if len(vector) != f.depth:
        raise ValueError(f"{len(vector)} vector exponents for a depth-{f.depth} function")
    a = np.abs(f.samples)
    for pos in range(f.depth - 1, -1, -1):
        ax = f.d + pos
        shape = [1] * a.ndim
        shape[ax] = f.weights[pos].size
        a = _lp_reduce(a, (ax,), _as_exponent(vector[pos]), f.weights[pos].reshape(shape))
    return a


def restrict_vector_norm(f: GridFunction, R: Sequence) -> GridFunction:
    """Pointwise ||f(x, .)||_{L^R(W)}, innermost factor last in ``R``."""
    return GridFunction(f.d, f.J, _vector_reduce(f, R))


def mixed_norm(f: GridFunction, spec: NormSpec) -> float:
    """Iterated norm L^P_x L^R_W, vector norms innermost.

    Raises
    ------
    InvalidExponentError
        For p <= 0.
    """
    if not isinstance(spec, NormSpec):
        spec = NormSpec(spec)
    if spec.spatial.dim != f.d:
        raise ValueError(f"norm covers {spec.spatial.dim} axes, function has {f.d}")
    a = _vector_reduce(f, spec.vector)
    # a has the d spatial axes; reduce blocks from the innermost
    start = f.d
    for dim, p in reversed(spec.spatial.groups):
        axes = tuple(range(start - dim, start))
        a = _lp_reduce(a, axes, _as_exponent(p), 1.0 / f.N ** dim)
        start -= dim
    return float(a)


# ---------------------------------------------------------------------------
# averages

def _parse_weight(weight, M):
    if isinstance(weight, tuple):
        return weight[0], int(weight[1])
    w = str(weight).strip()
    if w.startswith("chi_tilde"):
        if "(" in w:
            M = int(w[w.index("(") + 1:w.index(")")])
        return "chi_tilde", int(M)
    if w == "indicator":
        return "indicator", None
    raise ValueError(f"unknown weight {weight!r}")


def _torus_dist_1d(N: int, side: int) -> np.ndarray:
    """Toroidal distance from the points i/N to [0, side/N], in units of 1/N."""
    i = np.arange(N)
    return np.where(i < side, 0, np.minimum(i - side, N - i)).astype(float)


def chi_tilde(d: int, J: int, R: DyadicCube, M: int = M_DEFAULT) -> np.ndarray:
    """(1 + dist(x, R) / l(R))^{-M} on the grid, toroidal Euclidean distance."""
    N = 1 << J
    side = N >> (-R.scale) if R.scale <= 0 else N
    if side < 1:
        raise ResolutionError(f"cube of scale {R.scale} is below the grid resolution {J}")
    base = _torus_dist_1d(N, side)
    dist2 = np.zeros((N,) * d)
    for ax in range(d):
        off = (R.corner[ax] * side) % N
        shape = [1] * d
        shape[ax] = N
        dist2 = dist2 + np.roll(base, off).reshape(shape) ** 2
    return (1.0 + np.sqrt(dist2) / side) ** (-float(M))


def _power(f: GridFunction, p: LebesgueExponent) -> np.ndarray:
    if not f.is_scalar:
        raise ValueError("averages are taken of scalar functions; reduce the vector norm first")
    a = np.abs(f.samples)
    if p.is_infinite:
        return a
    return a ** float(1 / p.recip)


def dyadic_averages(f: GridFunction, scale: int, p=1, weight="indicator", M: int = M_DEFAULT) -> np.ndarray:
    """ave^p over every cube of the given scale, indexed by corner.

    The chi-tilde weighted averages are computed for all cubes of a scale
    at once as a circular correlation; indicator averages are block sums.
    """
    p = _as_exponent(p)
    kind, M = _parse_weight(weight, M)
    key = ("ave", scale, p, kind, M)
    if key in f._cache:
        return f._cache[key]
    if scale > 0 or -scale > f.J:
        raise ResolutionError(f"scale {scale} outside [-{f.J}, 0]")
    d, N = f.d, f.N
    side = N >> (-scale)
    per = N // side
    g = _power(f, p)
    if kind == "indicator":
        blocks = g.reshape(sum(((per, side) for _ in range(d)), ()))
        red = tuple(range(1, 2 * d, 2))
        out = blocks.max(axis=red) if p.is_infinite else blocks.mean(axis=red)
    else:
        w = chi_tilde(d, f.J, DyadicCube(d, scale, (0,) * d), M)
        if p.is_infinite:
            out = np.empty((per,) * d)
            for c in np.ndindex(*out.shape):
                shifted = np.roll(w, tuple(ci * side for ci in c), axis=tuple(range(d)))
                out[c] = (g * shifted).max()
        else:
            corr = np.fft.ifftn(np.fft.fftn(g) * np.conj(np.fft.fftn(w))).real
            sl = tuple(slice(None, None, side) for _ in range(d))
            out = np.maximum(corr[sl], 0.0) / N ** d / float(Fraction(1, per) ** d)
    if not p.is_infinite:
        out = out ** float(p.recip)
    out.setflags(write=False)
    f._cache[key] = out
    return out


def ave(f: GridFunction, R: DyadicCube, p=1, weight="indicator", M: int = M_DEFAULT) -> float:
    """Weighted average (|R|^{-1} sum |f|^p w_R N^{-d})^{1/p}.

    Parameters
    ----------
    weight : {"indicator", "chi_tilde"} or "chi_tilde(M)"
        Indicator of R or the decaying weight chi-tilde_R^M.
    """
    if R.is_shifted or R.dim != f.d:
        raise ValueError("R must be an unshifted cube of the function's dimension")
    table = dyadic_averages(f, R.scale, p, weight, M)
    return float(table[tuple(R.corner)])


def _cubes_of(cubes) -> list:
    if isinstance(cubes, TileCollection):
        pairs = set(zip(cubes.scale.tolist(), map(tuple, cubes.corner.tolist())))
        return [DyadicCube(cubes.d, j, c) for j, c in sorted(pairs)]
    return list(cubes)


def spatial_size(f: GridFunction, cubes, p=1, weight="chi_tilde", M: int = M_DEFAULT) -> float:
    """Supremum of ``ave`` over a set of cubes or over a collection's spatial cubes.

    Raises
    ------
    UndefinedSizeError
        If the cube set is empty.
    """
    cubes = _cubes_of(cubes)
    if not cubes:
        raise UndefinedSizeError("spatial size over an empty cube set")
    best = 0.0
    for R in cubes:
        best = max(best, ave(f, R, p, weight, M))
    return best


# ---------------------------------------------------------------------------
# generators used by the experiments

def bandlimited_field(d: int, J: int, cutoff: int, rng: np.random.Generator, real: bool = True,
                      weights=()) -> GridFunction:
    """Random trigonometric polynomial with frequencies in [-cutoff, cutoff)^d.

    The random draws depend only on ``cutoff`` and the W shape, so the same
    generator state gives the same continuum function at every J.
    """
    N = 1 << J
    if 2 * cutoff > N:
        raise ResolutionError(f"cutoff {cutoff} exceeds the Nyquist range of J={J}")
    wshape = tuple(np.asarray(w).size for w in weights)
    shape = (2 * cutoff,) * d + wshape
    coef = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)
    fhat = np.zeros((N,) * d + wshape, dtype=complex)
    idx = np.arange(-cutoff, cutoff) % N
    fhat[np.ix_(*([idx] * d))] = coef
    vals = np.fft.ifftn(fhat, axes=tuple(range(d))) * N ** d / (2 * cutoff) ** (d / 2)
    if real:
        vals = vals.real * np.sqrt(2)
    return GridFunction(d, J, vals, weights)


def dyadic_indicator(d: int, J: int, cells: np.ndarray) -> GridFunction:
    """Indicator of the union of marked cells of a coarse grid.

    ``cells`` is a boolean array of shape (2^b,)*d; each entry marks a cube
    of side 2^{-b}.
    """
    cells = np.asarray(cells, dtype=bool)
    b = int(np.log2(cells.shape[0]))
    if b > J:
        raise ResolutionError("indicator cells finer than the grid")
    rep = 1 << (J - b)
    arr = cells
    for ax in range(d):
        arr = np.repeat(arr, rep, axis=ax)
    return GridFunction(d, J, arr.astype(float))


def random_dyadic_indicator(d: int, J: int, level: int, density: float,
                            rng: np.random.Generator) -> GridFunction:
    """Indicator of a random union of cubes of side 2^{-level}."""
    cells = rng.random((1 << level,) * d) < density
    if not cells.any():
        cells.flat[rng.integers(cells.size)] = True
    return dyadic_indicator(d, J, cells)
