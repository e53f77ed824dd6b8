"""Wave packets built on DFT bins and their coefficients.

A packet for the tile R x omega is defined by its spectrum: a smooth
profile on the bins m whose midpoints m + 1/2 lie in the 99/100 dilate of
omega, times the phase e^{-2 pi i m . c_R} that centres it on R, scaled to
unit L^2 norm.  Bins outside the dilate are exactly zero.

Set the environment variable ``HELICOID_CACHE`` to a directory to keep
packet spectra on disk between runs.
"""
from __future__ import annotations

import hashlib
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import sparse

from .dyadic import DyadicCube, Tile, TileCollection
from .errors import ResolutionError
from .gridfn import GridFunction, chi_tilde

__all__ = [
    "DILATE",
    "PROFILES",
    "WavePacket",
    "support_bins",
    "build_packet",
    "coefficient",
    "analysis_matrix",
    "clear_cache",
]

DILATE = Fraction(99, 100)
PROFILES = ("raised_cosine", "gaussian_truncated")
GAUSS_SIGMA = 0.35
ADAPTED_ORDERS = (2, 4, 8)


def _axis_bins(lo: Fraction, hi: Fraction, N: int, dilate: Fraction) -> np.ndarray:
    """Integers m with m + 1/2 in the dilate of [lo, hi) about its centre."""
    if lo < -Fraction(N, 2) or hi > Fraction(N, 2):
        raise ResolutionError(f"frequency interval [{lo}, {hi}) exceeds the Nyquist range of N={N}")
    cen = (lo + hi) / 2
    half = dilate * (hi - lo) / 2
    a, b = cen - half, cen + half
    # m + 1/2 >= a and m + 1/2 < b
    m0 = -((-(a - Fraction(1, 2))) // 1)
    m1 = -((-(b - Fraction(1, 2))) // 1) - 1
    return np.arange(int(m0), int(m1) + 1, dtype=np.int64)


def support_bins(freq: DyadicCube, N: int, dilate=DILATE) -> list:
    """Per-axis support bins of a packet with frequency cube ``freq``."""
    return [_axis_bins(lo, hi, N, Fraction(dilate)) for lo, hi in freq.bounds()]


def _axis_profile(bins, lo, hi, profile, dilate) -> np.ndarray:
    cen = float((lo + hi) / 2)
    half = float(Fraction(dilate) * (hi - lo) / 2)
    t = (bins + 0.5 - cen) / half
    if profile == "raised_cosine":
        return np.cos(np.pi * t / 2) ** 2
    if profile == "gaussian_truncated":
        return np.exp(-t ** 2 / (2 * GAUSS_SIGMA ** 2))
    raise ValueError(f"unknown profile {profile!r}")


def _magnitude(freq: DyadicCube, N: int, profile: str, dilate=DILATE):
    bins = support_bins(freq, N, dilate)
    if any(b.size == 0 for b in bins):
        raise ResolutionError(f"no DFT bin inside the dilate of {freq}")
    mag = np.ones(())
    for b, (lo, hi) in zip(bins, freq.bounds()):
        mag = np.multiply.outer(mag, _axis_profile(b, lo, hi, profile, dilate))
    return bins, mag / np.sqrt((mag ** 2).sum())


def _phase(bins, center) -> np.ndarray:
    ph = np.ones((), dtype=complex)
    for b, c in zip(bins, center):
        # reduce m * c modulo 1 exactly before exponentiating
        frac = np.array([float((int(m) * c) % 1) for m in b])
        ph = np.multiply.outer(ph, np.exp(-2j * np.pi * frac))
    return ph


@dataclass(frozen=True, eq=False)
class WavePacket:
    """A packet stored through its spectrum on the support bins.

    Attributes
    ----------
    tile : Tile
    J : int
    bins : list of ndarray
        Per-axis integer frequencies of the support.
    coeffs : ndarray
        Spectrum values on the product of ``bins``; unit l^2 norm.
    profile : str
    """

    tile: Tile
    J: int
    bins: list
    coeffs: np.ndarray
    profile: str = "raised_cosine"
    _values: dict = field(default_factory=dict, repr=False)

    @property
    def d(self) -> int:
        return self.tile.spatial.dim

    @property
    def N(self) -> int:
        return 1 << self.J

    def spectrum(self) -> np.ndarray:
        """Dense normalized spectrum (numpy FFT ordering)."""
        out = np.zeros((self.N,) * self.d, dtype=complex)
        out[np.ix_(*[b % self.N for b in self.bins])] = self.coeffs
        return out

    @property
    def values(self) -> GridFunction:
        if "v" not in self._values:
            self._values["v"] = GridFunction.from_spectrum(self.d, self.J, self.spectrum())
        return self._values["v"]

    @property
    def adaptedness_report(self) -> dict:
        """Measured decay constants sup |phi| (1 + dist/l)^M l^{d/2}, plus derivative checks.

        Keys are ``M`` in (2, 4, 8) and ``("diff", order)`` for difference
        quotients of the demodulated packet up to order 2, measured with
        decay exponent 4 and normalized by l^{order}.
        """
        if "report" in self._values:
            return self._values["report"]
        R = self.tile.spatial
        ell = float(R.side)
        phi = self.values.samples
        rep = {}
        for M in ADAPTED_ORDERS:
            w = chi_tilde(self.d, self.J, R, M)
            rep[M] = float((np.abs(phi) / w).max() * ell ** (self.d / 2))
        # demodulate by the integer frequency nearest the centre (keeps periodicity)
        cen = [round(c) for c in self.tile.freq.center()]
        x = self.values.points()
        psi = phi * np.exp(-2j * np.pi * sum(c * xi for c, xi in zip(cen, x)))
        w4 = chi_tilde(self.d, self.J, R, 4)
        h = 1.0 / self.N
        cur = [psi]
        for order in (1, 2):
            nxt = [(np.roll(g, -1, axis=ax) - g) / h for g in cur for ax in range(self.d)]
            rep[("diff", order)] = float(max((np.abs(g) / w4).max() for g in nxt)
                                         * ell ** (self.d / 2 + order))
            cur = nxt
        self._values["report"] = rep
        return rep


def _tile_key(tile: Tile):
    s, w = tile.spatial, tile.freq
    return (s.dim, s.scale, s.corner, w.scale, w.corner, w.shift3)


# bumped whenever the packet geometry changes, so stale caches are ignored
_CACHE_FORMAT = 2


def _disk_path(key) -> Path | None:
    root = os.environ.get("HELICOID_CACHE")
    if not root:
        return None
    h = hashlib.sha256(repr((_CACHE_FORMAT, key)).encode()).hexdigest()[:32]
    return Path(root) / f"packet-{h}.npz"


def _disk_load(key):
    path = _disk_path(key)
    if path is None or not path.exists():
        return None
    try:
        with np.load(path) as z:
            if str(z["key"]) != repr((_CACHE_FORMAT, key)):
                return None
            d = int(z["d"])
            bins = [z[f"b{i}"] for i in range(d)]
            return bins, z["coeffs"]
    except (OSError, ValueError, KeyError):
        return None


def _disk_store(key, bins, coeffs):
    path = _disk_path(key)
    if path is None:
        return
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            np.savez(fh, key=repr((_CACHE_FORMAT, key)), d=len(bins), coeffs=coeffs,
                     **{f"b{i}": b for i, b in enumerate(bins)})
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


@lru_cache(maxsize=65536)
def _packet_cached(key, tile: Tile, J: int, profile: str):
    hit = _disk_load(key)
    if hit is not None:
        return hit
    N = 1 << J
    bins, mag = _magnitude(tile.freq, N, profile)
    coeffs = mag * _phase(bins, tile.spatial.center())
    for b in bins:
        b.setflags(write=False)
    coeffs.setflags(write=False)
    _disk_store(key, bins, coeffs)
    return bins, coeffs


def clear_cache() -> None:
    """Drop the in-memory packet cache."""
    _packet_cached.cache_clear()


def build_packet(tile: Tile, J: int, profile: str = "raised_cosine") -> WavePacket:
    """Packet adapted to ``tile`` on the grid of resolution 2^J.

    Raises
    ------
    ResolutionError
        If the frequency cube leaves [-N/2, N/2)^d or the spatial cube is
        finer than the grid.
    """
    if profile not in PROFILES:
        raise ValueError(f"profile must be one of {PROFILES}")
    if -tile.spatial.scale > J:
        raise ResolutionError(f"spatial scale {tile.spatial.scale} finer than grid 2^-{J}")
    key = (_tile_key(tile), J, profile)
    bins, coeffs = _packet_cached(key, tile, J, profile)
    return WavePacket(tile, J, list(bins), coeffs, profile)


def _spectrum_of(f: GridFunction) -> np.ndarray:
    if "spectrum" not in f._cache:
        s = f.spectrum()
        s.setflags(write=False)
        f._cache["spectrum"] = s
    return f._cache["spectrum"]


def coefficient(f: GridFunction, packet: WavePacket):
    """<f, phi> = N^{-d} sum_x f(x) conj(phi(x)), evaluated on the packet's bins.

    Returns a complex number, or an array over W for vector-valued f.
    """
    if (f.d, f.J) != (packet.d, packet.J):
        raise ResolutionError(f"function grid ({f.d}, {f.J}) vs packet grid ({packet.d}, {packet.J})")
    fh = _spectrum_of(f)[np.ix_(*[b % f.N for b in packet.bins])]
    conj = np.conj(packet.coeffs)
    axes = tuple(range(f.d))
    val = np.tensordot(conj, fh, axes=(axes, axes))
    return complex(val) if f.is_scalar else val


def analysis_matrix(S: TileCollection, slot: int, J: int, profile: str = "raised_cosine") -> sparse.csr_matrix:
    """Sparse matrix whose row s holds conj(phi_s-hat) for slot ``slot`` (0-based).

    Multiplying by a flattened spectrum gives every coefficient at once.
    Rows of tiles with the same frequency cube share one profile.
    """
    N = 1 << J
    d = S.d
    rows, cols, vals = [], [], []
    groups = {}
    for i in range(len(S)):
        key = (int(S.scale[i]), tuple(S.fcorner[i, slot]), tuple(S.fshift3[i, slot]))
        groups.setdefault(key, []).append(i)
    strides = N ** np.arange(d - 1, -1, -1)
    for key, members in groups.items():
        if -key[0] > J:
            raise ResolutionError(f"spatial scale {key[0]} finer than grid 2^-{J}")
        freq = S.freq_cube(members[0], slot)
        bins, mag = _magnitude(freq, N, profile)
        flat = np.zeros((), dtype=np.int64)
        for b, st in zip(bins, strides):
            flat = np.add.outer(flat, (b % N) * st)
        flat = flat.ravel()
        magf = mag.ravel()
        members = np.asarray(members)
        side = Fraction(1, 1 << -key[0])
        # centre of R in units of 1/(2 side^-1): (2 k + 1) side / 2
        phase = np.zeros((len(members), flat.size))
        for ax, b in enumerate(bins):
            shape = [1] * d
            shape[ax] = b.size
            ks = S.corner[members, ax]
            den = 2 << (-key[0])
            num = (2 * ks + 1)[:, None] * b[None, :]
            frac = (num % den) / den
            expand = np.broadcast_to(frac.reshape((len(members),) + tuple(shape)),
                                     (len(members),) + mag.shape)
            phase = phase + expand.reshape(len(members), -1)
        block = magf[None, :] * np.exp(2j * np.pi * phase)
        rows.append(np.repeat(members, flat.size))
        cols.append(np.tile(flat, len(members)))
        vals.append(block.ravel())
    if not rows:
        return sparse.csr_matrix((0, N ** d), dtype=complex)
    return sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(len(S), N ** d))
