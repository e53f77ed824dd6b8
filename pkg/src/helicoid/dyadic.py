"""Dyadic cubes, tiles, multi-tiles, rank-k collections and trees.

Unit system: the spatial domain is the torus [0, 1)^d.  A spatial cube of
scale j <= 0 has side 2^j and integer corner k in [0, 2^{-j})^d.  Frequency
cubes are measured in integer frequency units, so the frequency cube of a
tile with spatial scale j has scale -j and side 2^{-j}; every tile has area 1.

A shifted cube carries a label rho in {-1/3, 0, 1/3}; at scale j its
offset is (-1)^j rho.  Alternating the sign keeps every fixed-label family
a nested lattice across scales.  Frequency endpoints are multiples of 1/3,
so comparisons are done on integers after scaling by 6.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateMatrixError, RankConstraintError

__all__ = [
    "C0_DEFAULT",
    "SEPARATION_DEFAULT",
    "DyadicCube",
    "Tile",
    "MultiTile",
    "TileCollection",
    "Tree",
    "RankCheck",
    "tile_order",
    "rank_k_check",
    "whitney_collection",
    "localize",
    "localize_lower",
    "spatial_projection",
    "find_trees",
    "all_cubes",
    "shift_sign",
]

C0_DEFAULT = 9
# |R_{s'}| <= 2^{-SEPARATION_DEFAULT} |R_s| counts as "much smaller"
SEPARATION_DEFAULT = 4

_SHIFTS = (Fraction(-1, 3), Fraction(0), Fraction(1, 3))


def _pow2(e):
    return Fraction(2) ** int(e)


@dataclass(frozen=True, order=True)
class DyadicCube:
    """Product of intervals [2^j (k_i + rho_i), 2^j (k_i + 1 + rho_i)).

    Parameters
    ----------
    dim : int
    scale : int
        j, so the side is 2^j.
    corner : tuple of int
    shift : tuple of Fraction, optional
        Per-axis label rho_i in {-1/3, 0, 1/3}; zeros when omitted.  The
        offset actually applied at scale j is (-1)^j rho_i.
    """

    dim: int
    scale: int
    corner: tuple
    shift: tuple = None

    def __post_init__(self):
        corner = tuple(int(c) for c in self.corner)
        if len(corner) != self.dim:
            raise ValueError(f"corner {corner} does not have dimension {self.dim}")
        shift = (Fraction(0),) * self.dim if self.shift is None else tuple(Fraction(s) for s in self.shift)
        if len(shift) != self.dim or any(s not in _SHIFTS for s in shift):
            raise ValueError(f"shift {shift} must lie in {{-1/3, 0, 1/3}}^{self.dim}")
        object.__setattr__(self, "corner", corner)
        object.__setattr__(self, "shift", shift)
        object.__setattr__(self, "scale", int(self.scale))

    @property
    def side(self) -> Fraction:
        return _pow2(self.scale)

    @property
    def measure(self) -> Fraction:
        return self.side ** self.dim

    @property
    def shift3(self) -> tuple:
        return tuple(int(3 * s) for s in self.shift)

    @property
    def is_shifted(self) -> bool:
        return any(self.shift)

    @property
    def offset(self) -> tuple:
        """Per-axis offset (-1)^j rho_i in units of the side."""
        return self.shift if self.scale % 2 == 0 else tuple(-r for r in self.shift)

    def bounds(self, c=1) -> list:
        """Per-axis [lo, hi) of the c-fold dilate about the centre."""
        c = Fraction(c)
        out = []
        for k, r in zip(self.corner, self.offset):
            lo = self.side * (k + r)
            cen = lo + self.side / 2
            half = c * self.side / 2
            out.append((cen - half, cen + half))
        return out

    def center(self) -> tuple:
        return tuple((lo + hi) / 2 for lo, hi in self.bounds())

    def within(self, other: "DyadicCube", c=1) -> bool:
        """True iff this cube is contained in the c-fold dilate of ``other``."""
        return all(a_lo >= b_lo and a_hi <= b_hi
                   for (a_lo, a_hi), (b_lo, b_hi) in zip(self.bounds(), other.bounds(c)))

    def intersects(self, other: "DyadicCube") -> bool:
        return all(a_lo < b_hi and b_lo < a_hi
                   for (a_lo, a_hi), (b_lo, b_hi) in zip(self.bounds(), other.bounds()))

    def contains_point(self, x: Sequence) -> bool:
        return all(lo <= Fraction(xi) < hi for xi, (lo, hi) in zip(x, self.bounds()))

    def parent(self) -> "DyadicCube":
        if self.is_shifted:
            raise ValueError("parent is only defined for unshifted cubes")
        return DyadicCube(self.dim, self.scale + 1, tuple(c >> 1 for c in self.corner))

    def ancestor(self, scale: int) -> "DyadicCube":
        if scale < self.scale:
            raise ValueError("ancestor scale below cube scale")
        s = scale - self.scale
        return DyadicCube(self.dim, scale, tuple(c >> s for c in self.corner))

    def children(self) -> list:
        out = []
        for bits in itertools.product((0, 1), repeat=self.dim):
            out.append(DyadicCube(self.dim, self.scale - 1,
                                  tuple(2 * c + int(3 * r) + b
                                        for c, r, b in zip(self.corner, self.offset, bits)), self.shift))
        return out

    def project(self, dprime: int) -> "DyadicCube":
        """Projection onto the first ``dprime`` axes."""
        return DyadicCube(dprime, self.scale, self.corner[:dprime], self.shift[:dprime])

    def translate(self, v: Sequence) -> "DyadicCube":
        """Translate an unshifted torus cube by v (multiples of its side), mod 1."""
        per = 1 << max(-self.scale, 0)
        ks = []
        for c, vi in zip(self.corner, v):
            q = Fraction(vi) / self.side
            if q.denominator != 1:
                raise ValueError("translation is not a multiple of the cube side")
            ks.append((c + int(q)) % per)
        return DyadicCube(self.dim, self.scale, tuple(ks), self.shift)


def all_cubes(d: int, scale: int) -> list:
    """All unshifted cubes of the given scale (<= 0) on the torus."""
    per = 1 << (-scale)
    return [DyadicCube(d, scale, c) for c in itertools.product(range(per), repeat=d)]


@dataclass(frozen=True, order=True)
class Tile:
    """Spatial cube times frequency cube of area one."""

    spatial: DyadicCube
    freq: DyadicCube

    def __post_init__(self):
        if self.spatial.is_shifted:
            raise ValueError("spatial cubes must be unshifted")
        if self.spatial.dim != self.freq.dim:
            raise ValueError("dimension mismatch")
        if self.spatial.scale + self.freq.scale != 0:
            raise ValueError("tile area must be one: spatial and frequency scales must cancel")


@dataclass(frozen=True, order=True)
class MultiTile:
    """n+1 tiles sharing one spatial cube.

    A ``None`` frequency marks an unspecified slot (used by tree tops).
    """

    spatial: DyadicCube
    freqs: tuple

    def __post_init__(self):
        object.__setattr__(self, "freqs", tuple(self.freqs))
        for w in self.freqs:
            if w is not None:
                Tile(self.spatial, w)

    def component(self, j: int) -> Tile:
        return Tile(self.spatial, self.freqs[j])


def tile_order(s1, s2, relation: str, c0=C0_DEFAULT) -> bool:
    """Order relations between tiles, read as ``s1 <rel> s2``.

    Parameters
    ----------
    s1, s2 : Tile
    relation : {"<", "<=", "lesssim", "lesssim'"}
        ``"<"``: R_1 strictly inside R_2 and omega_2 inside 3 omega_1.
        ``"<="``: ``"<"`` or equality.  ``"lesssim"``: R_1 inside R_2 and
        omega_2 inside c0 omega_1.  ``"lesssim'"``: lesssim but not <=.
        The aliases ``"~<"`` and ``"~<'"`` are accepted.
    """
    rel = {"~<": "lesssim", "~<'": "lesssim'", "≲": "lesssim", "≲'": "lesssim'", "≤": "<="}.get(relation, relation)
    sub = s1.spatial.within(s2.spatial)
    strict = sub and s1.spatial != s2.spatial
    lt = strict and s2.freq.within(s1.freq, 3)
    if rel == "<":
        return lt
    le = lt or s1 == s2
    if rel == "<=":
        return le
    ls = sub and s2.freq.within(s1.freq, c0)
    if rel == "lesssim":
        return ls
    if rel == "lesssim'":
        return ls and not le
    raise ValueError(f"unknown relation {relation!r}")


class TileCollection:
    """Finite collection of multi-tiles stored as integer arrays.

    Parameters
    ----------
    n, k, d : int
    scale : array of int, shape (S,)
        Spatial scale j <= 0 of each multi-tile.
    corner : array of int, shape (S, d)
    fcorner : array of int, shape (S, n+1, d)
        Frequency corners m (frequency scale is -j).
    fshift3 : array of int, shape (S, n+1, d)
        Three times the frequency shift, in {-1, 0, 1}.
    """

    def __init__(self, n, k, d, scale=None, corner=None, fcorner=None, fshift3=None):
        self.n, self.k, self.d = int(n), int(k), int(d)
        S = 0 if scale is None else len(scale)
        self.scale = np.asarray(scale if scale is not None else [], dtype=np.int64).reshape(S)
        self.corner = np.asarray(corner if corner is not None else [], dtype=np.int64).reshape(S, self.d)
        self.fcorner = np.asarray(fcorner if fcorner is not None else [], dtype=np.int64).reshape(S, self.n + 1, self.d)
        self.fshift3 = np.asarray(fshift3 if fshift3 is not None else [], dtype=np.int64).reshape(S, self.n + 1, self.d)
        if S:
            if (self.scale > 0).any():
                raise ValueError("spatial scales must be <= 0 on the torus")
            per = np.left_shift(1, -self.scale)[:, None]
            if (self.corner < 0).any() or (self.corner >= per).any():
                raise ValueError("spatial corners outside the torus")
            if not np.isin(self.fshift3, (-1, 0, 1)).all():
                raise ValueError("frequency shifts must be thirds")
        for a in (self.scale, self.corner, self.fcorner, self.fshift3):
            a.setflags(write=False)

    @classmethod
    def from_tiles(cls, tiles: Iterable, n: int, k: int, d: int) -> "TileCollection":
        tiles = list(tiles)
        scale = [t.spatial.scale for t in tiles]
        corner = [t.spatial.corner for t in tiles]
        fc = [[w.corner for w in t.freqs] for t in tiles]
        fs = [[w.shift3 for w in t.freqs] for t in tiles]
        return cls(n, k, d, scale, corner, fc, fs)

    def __len__(self):
        return int(self.scale.shape[0])

    def __iter__(self):
        for i in range(len(self)):
            yield self.tile(i)

    def __repr__(self):
        return f"TileCollection(n={self.n}, k={self.k}, d={self.d}, size={len(self)})"

    def spatial_cube(self, i: int) -> DyadicCube:
        return DyadicCube(self.d, int(self.scale[i]), tuple(self.corner[i]))

    def freq_cube(self, i: int, j: int) -> DyadicCube:
        return DyadicCube(self.d, -int(self.scale[i]), tuple(self.fcorner[i, j]),
                          tuple(Fraction(int(r), 3) for r in self.fshift3[i, j]))

    def tile(self, i: int) -> MultiTile:
        return MultiTile(self.spatial_cube(i), tuple(self.freq_cube(i, j) for j in range(self.n + 1)))

    def keys(self) -> list:
        """Hashable key per multi-tile, usable for set comparisons."""
        flat = np.concatenate([self.scale[:, None], self.corner,
                               self.fcorner.reshape(len(self), -1),
                               self.fshift3.reshape(len(self), -1)], axis=1)
        return [tuple(row) for row in flat.tolist()]

    def subset(self, idx) -> "TileCollection":
        idx = np.asarray(idx)
        if idx.dtype == bool:
            idx = np.flatnonzero(idx)
        elif idx.size == 0:
            idx = idx.astype(np.int64)
        return TileCollection(self.n, self.k, self.d, self.scale[idx], self.corner[idx],
                              self.fcorner[idx], self.fshift3[idx])

    def concat(self, other: "TileCollection") -> "TileCollection":
        return TileCollection(self.n, self.k, self.d,
                              np.concatenate([self.scale, other.scale]),
                              np.concatenate([self.corner, other.corner]),
                              np.concatenate([self.fcorner, other.fcorner]),
                              np.concatenate([self.fshift3, other.fshift3]))

    def measure(self) -> np.ndarray:
        """|R_s| for every multi-tile."""
        return np.ldexp(1.0, self.d * self.scale)

    def translate(self, v: Sequence) -> "TileCollection":
        """Translate all spatial cubes by the vector v (Fractions) modulo 1."""
        corner = np.array(self.corner)
        for i in range(len(self)):
            corner[i] = self.spatial_cube(i).translate(v).corner
        return TileCollection(self.n, self.k, self.d, self.scale, corner, self.fcorner, self.fshift3)

    def to_text(self) -> str:
        """Line-oriented serialisation, one multi-tile per line."""
        lines = [f"# helicoid-tiles n={self.n} k={self.k} d={self.d}"]
        for i in range(len(self)):
            head = " ".join(str(int(x)) for x in [self.scale[i], *self.corner[i]])
            slots = " ; ".join(" ".join(str(int(x)) for x in [*self.fcorner[i, j], *self.fshift3[i, j]])
                               for j in range(self.n + 1))
            lines.append(f"{head} | {slots}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "TileCollection":
        """Parse :meth:`to_text` output; invariants are re-validated."""
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = lines[0].split()
        if header[:2] != ["#", "helicoid-tiles"]:
            raise ValueError("missing tile-collection header")
        meta = dict(item.split("=") for item in header[2:])
        n, k, d = int(meta["n"]), int(meta["k"]), int(meta["d"])
        scale, corner, fc, fs = [], [], [], []
        for ln in lines[1:]:
            head, slots = ln.split("|")
            h = [int(x) for x in head.split()]
            if len(h) != 1 + d:
                raise ValueError(f"malformed spatial part: {head!r}")
            scale.append(h[0])
            corner.append(h[1:])
            parts = [[int(x) for x in p.split()] for p in slots.split(";")]
            if len(parts) != n + 1 or any(len(p) != 2 * d for p in parts):
                raise ValueError(f"malformed frequency part: {slots!r}")
            fc.append([p[:d] for p in parts])
            fs.append([p[d:] for p in parts])
        return cls(n, k, d, scale, corner, fc, fs)


# ---------------------------------------------------------------------------
# integer geometry on arrays

def _p2(e):
    return np.left_shift(np.int64(1), np.asarray(e, dtype=np.int64))


def shift_sign(lscale):
    """(-1)^l, the sign applied to shift labels at scale l."""
    return 1 - 2 * (np.asarray(lscale, dtype=np.int64) & 1)


def _freq_lo6(lscale, m, r3):
    """6 * left endpoint of a frequency interval at scale ``lscale``."""
    return _p2(lscale) * (6 * m + 2 * r3 * shift_sign(lscale))


def freq_within(l_a, m_a, r_a, l_b, m_b, r_b, c) -> np.ndarray:
    """omega_b inside the c-fold dilate of omega_a, all axes (last axis = d).

    ``r_a`` and ``r_b`` are shift labels times three.
    """
    pa = _p2(l_a)
    pb = _p2(l_b)
    r_a = r_a * shift_sign(l_a)
    r_b = r_b * shift_sign(l_b)
    lo_b = pb * (6 * m_b + 2 * r_b)
    hi_b = lo_b + 6 * pb
    cen_a = pa * (6 * m_a + 2 * r_a + 3)
    half = 3 * c * pa
    return ((lo_b >= cen_a - half) & (hi_b <= cen_a + half)).all(axis=-1)


def spatial_within(j_a, c_a, j_b, c_b) -> np.ndarray:
    """R_a inside R_b (unshifted torus cubes), reduced over the last axis."""
    diff = np.asarray(j_b) - np.asarray(j_a)
    ok = diff >= 0
    sh = np.where(ok, diff, 0)
    inside = (np.right_shift(c_a, sh[..., None]) == c_b).all(axis=-1)
    return ok & inside


def _pair_relations(S: TileCollection, ia, ib, c0):
    """Relations between s' = S[ia] (rows) and s = S[ib] (columns), per slot."""
    ja = S.scale[ia][:, None]
    jb = S.scale[ib][None, :]
    ca = S.corner[ia][:, None, :]
    cb = S.corner[ib][None, :, :]
    sub = spatial_within(ja, ca, jb, cb)
    eqR = sub & (ja == jb)
    la = -ja[..., None]
    lb = -jb[..., None]
    ma = S.fcorner[ia][:, None]
    mb = S.fcorner[ib][None, :]
    ra = S.fshift3[ia][:, None]
    rb = S.fshift3[ib][None, :]
    in3 = freq_within(la[..., None], ma, ra, lb[..., None], mb, rb, 3)
    inc = freq_within(la[..., None], ma, ra, lb[..., None], mb, rb, c0)
    eqw = ((ma == mb) & (ra == rb)).all(axis=-1) & (ja == jb)[..., None]
    le = (sub & ~eqR)[..., None] & in3 | (eqR[..., None] & eqw)
    ls = sub[..., None] & inc
    return {"sub": sub, "eqR": eqR, "eqw": eqw, "le": le, "ls": ls, "lac": ls & ~le,
            "ja": ja, "jb": jb}


@dataclass(frozen=True)
class RankCheck:
    """Result of :func:`rank_k_check`.

    Attributes
    ----------
    ok : bool
    pair : tuple of int or None
        Indices (s', s) of the first violating ordered pair.
    condition : str
        ``"i"``, ``"ii"`` or ``"iii"`` for the violated condition.
    subset : tuple
        The fixed index set I of the violation.
    """

    ok: bool
    pair: tuple | None = None
    condition: str = ""
    subset: tuple = ()

    def __bool__(self):
        return self.ok


def rank_k_check(S: TileCollection, c0=C0_DEFAULT, separation=SEPARATION_DEFAULT,
                 chunk: int = 256) -> RankCheck:
    """Exhaustive pairwise verification of the three rank-k conditions.

    Conditions, for all ordered pairs (s', s) and k-subsets I of the slots:

    (i) equal frequency cubes on I force equal cubes in every slot;
    (ii) s'_i <= s_i on I forces s'_j lesssim s_j in every slot;
    (iii) under the premise of (ii) and |R_{s'}| <= 2^{-separation} |R_s|,
    at least two slots outside I satisfy s'_j lesssim' s_j.

    For k = 0 the empty premise is read as: (i) applies to pairs of equal
    spatial scale, and (ii)/(iii) apply to pairs with R_{s'} inside R_s.
    """
    n1 = S.n + 1
    subsets = list(itertools.combinations(range(n1), S.k))
    N = len(S)
    allb = np.arange(N)
    for start in range(0, N, chunk):
        ia = np.arange(start, min(N, start + chunk))
        rel = _pair_relations(S, ia, allb, c0)
        all_eq = rel["eqw"].all(axis=-1)
        all_ls = rel["ls"].all(axis=-1)
        small = (S.d * (rel["jb"] - rel["ja"])) >= separation
        for I in subsets:
            I_list = list(I)
            if S.k == 0:
                eqI = rel["ja"] == rel["jb"]
                prem = rel["sub"]
            else:
                eqI = rel["eqw"][..., I_list].all(axis=-1)
                prem = rel["le"][..., I_list].all(axis=-1)
            for cond, bad in (
                ("i", eqI & ~all_eq),
                ("ii", prem & ~all_ls),
                ("iii", prem & small & (np.delete(rel["lac"], I_list, axis=-1).sum(axis=-1) < 2)),
            ):
                if bad.any():
                    a, b = np.argwhere(bad)[0]
                    return RankCheck(False, (int(ia[a]), int(b)), cond, I)
    return RankCheck(True)


# ---------------------------------------------------------------------------
# Whitney pull-back collections

def _block_check(A: np.ndarray, d: int):
    rows, cols = A.shape[0] // d, A.shape[1] // d
    for i in range(rows):
        for j in range(cols):
            blk = A[i * d:(i + 1) * d, j * d:(j + 1) * d]
            if round(float(np.linalg.det(blk.astype(float)))) == 0:
                raise DegenerateMatrixError(f"block ({i}, {j}) of A is singular", (i, j))


def _freq_compatible(cand, kept, n1, k, d, c0, separation) -> bool:
    """Rank-k compatibility of one frequency tuple against kept ones.

    Spatial cubes at different scales are assumed nested, the worst case
    for the order conditions; equal-scale pairs only meet condition (i).
    """
    l_c, m_c, r_c = cand
    l_k, m_k, r_k = kept
    if l_k.size == 0:
        return True
    subsets = list(itertools.combinations(range(n1), k))
    same = l_k == l_c
    if same.any():
        eqw = ((m_k[same] == m_c) & (r_k[same] == r_c)).all(axis=-1)
        if k == 0:
            return False
        for I in subsets:
            if (eqw[:, list(I)].all(axis=-1) & ~eqw.all(axis=-1)).any():
                return False
    for finer_is_cand in (True, False):
        mask = (l_k < l_c) if finer_is_cand else (l_k > l_c)
        if not mask.any():
            continue
        if finer_is_cand:
            la, ma, ra = l_c, m_c[None], r_c[None]
            lb, mb, rb = l_k[mask][:, None, None], m_k[mask], r_k[mask]
            la = np.full_like(lb, l_c)
        else:
            la, ma, ra = l_k[mask][:, None, None], m_k[mask], r_k[mask]
            lb, mb, rb = np.full_like(la, l_c), m_c[None], r_c[None]
        in3 = freq_within(la, ma, ra, lb, mb, rb, 3)
        inc = freq_within(la, ma, ra, lb, mb, rb, c0)
        lac = inc & ~in3
        gap = np.abs(la[:, 0, 0] - lb[:, 0, 0])
        small = d * gap >= separation
        for I in subsets:
            I = list(I)
            prem = in3[:, I].all(axis=-1) if k else np.ones(len(in3), bool)
            if (prem & ~inc.all(axis=-1)).any():
                return False
            if (prem & small & (np.delete(lac, I, axis=-1).sum(axis=-1) < 2)).any():
                return False
    return True


def whitney_collection(A, d: int, scale_range: Iterable, box_bound: int, i0: int = 0,
                       lo: int = 3, hi: int = 3, c0=C0_DEFAULT,
                       separation=SEPARATION_DEFAULT, max_candidates: int = 4_000_000
                       ) -> TileCollection:
    """Rank-k multi-tiles from the pull-back of a Whitney decomposition.

    Frequency cubes Q_1 x ... x Q_n of side 2^l (l in ``scale_range``) are
    kept when, at their centres, the sup norm of block row ``i0`` of
    ``A xi`` lies in [lo 2^l, hi 2^l] and the other block rows are at most
    hi 2^l.  The last cube is the side-2^l cube containing
    -(c_1 + ... + c_n), using a 1/3 shift when n is even.  Frequency tuples
    are then thinned greedily (coarse scales first, lexicographic corners)
    to those pairwise compatible with the rank-k conditions, and crossed
    with every spatial cube of scale -l.

    Parameters
    ----------
    A : array of int, shape (d(n-k), dn)
    d : int
    scale_range : iterable of int
        Frequency scales l >= 0.
    box_bound : int
        Every frequency cube must lie in [-box_bound, box_bound)^d.

    Raises
    ------
    DegenerateMatrixError
        If some d x d block of A is singular.
    """
    A = np.asarray(A, dtype=np.int64)
    if A.ndim != 2 or A.shape[0] % d or A.shape[1] % d:
        raise ValueError("A must have shape (d(n-k), dn)")
    n = A.shape[1] // d
    k = n - A.shape[0] // d
    if k < 0 or 2 * k >= n + 1:
        raise RankConstraintError(f"A gives rank k={k} outside 0 <= k < (n+1)/2 for n={n}")
    _block_check(A, d)
    n1 = n + 1
    rows = A.shape[0] // d
    cand = []
    for l in sorted(set(int(x) for x in scale_range)):
        if l < 0:
            raise ValueError("frequency scales must be >= 0")
        side = 1 << l
        nu_lo = -(box_bound // side) if box_bound % side == 0 else -(-(-box_bound) // side)
        nu_lo = -(box_bound // side)
        nu_hi = box_bound // side - 1
        if nu_hi < nu_lo:
            continue
        width = nu_hi - nu_lo + 1
        total = width ** (n * d)
        if total > max_candidates:
            raise ValueError(f"{total} candidate cubes at scale {l}; reduce box_bound")
        grid = np.indices((width,) * (n * d)).reshape(n * d, -1).T + nu_lo
        # centres in units of 2^l are nu + 1/2; work with 2*(nu + 1/2)
        c2 = 2 * grid + 1
        eta2 = c2 @ A.T
        norms = np.abs(eta2).reshape(-1, rows, d).max(axis=-1)
        ok = (norms[:, i0] >= 2 * lo) & (norms[:, i0] <= 2 * hi)
        for i in range(rows):
            if i != i0:
                ok &= norms[:, i] <= 2 * hi
        grid = grid[ok]
        nus = grid.reshape(-1, n, d)
        # x = -sum(nu + 1/2) per axis, in units of 2^l
        s = nus.sum(axis=1)
        if n % 2 == 1:
            m_last = -s - (n + 1) // 2
            r_last = np.zeros_like(m_last)
        else:
            # label 1/3 has offset +1/3 at even l and -1/3 at odd l
            m_last = -s - n // 2 - (1 if l % 2 == 0 else 0)
            r_last = np.ones_like(m_last)
        off = r_last * (1 if l % 2 == 0 else -1)
        inbox = ((side * (3 * m_last + off) >= -3 * box_bound)
                 & (side * (3 * m_last + off + 3) <= 3 * box_bound)).all(axis=-1)
        m_all = np.concatenate([nus, m_last[:, None, :]], axis=1)[inbox]
        r_all = np.concatenate([np.zeros_like(nus), r_last[:, None, :]], axis=1)[inbox]
        for m, r in zip(m_all, r_all):
            cand.append((l, m, r))
    kept_l, kept_m, kept_r = [], [], []
    for l, m, r in cand:
        kl = np.asarray(kept_l, dtype=np.int64)
        km = np.asarray(kept_m, dtype=np.int64).reshape(-1, n1, d)
        kr = np.asarray(kept_r, dtype=np.int64).reshape(-1, n1, d)
        if _freq_compatible((l, m, r), (kl, km, kr), n1, k, d, c0, separation):
            kept_l.append(l)
            kept_m.append(m)
            kept_r.append(r)
    scale, corner, fc, fs = [], [], [], []
    for l, m, r in zip(kept_l, kept_m, kept_r):
        per = 1 << l
        for c in itertools.product(range(per), repeat=d):
            scale.append(-l)
            corner.append(c)
            fc.append(m)
            fs.append(r)
    return TileCollection(n, k, d, scale, corner, fc, fs)


# ---------------------------------------------------------------------------
# localisation

def _cube_arrays(R: DyadicCube):
    return np.int64(R.scale), np.asarray(R.corner, dtype=np.int64)


def localize(S: TileCollection, R0: DyadicCube) -> TileCollection:
    """Sub-collection of multi-tiles whose spatial cube lies in R0."""
    if R0.is_shifted:
        raise ValueError("R0 must be unshifted")
    j0, c0_ = _cube_arrays(R0)
    mask = spatial_within(S.scale, S.corner, j0, c0_[None, :])
    return S.subset(mask)


def localize_lower(S: TileCollection, dprime: int, Rtilde: DyadicCube) -> TileCollection:
    """Multi-tiles whose spatial cube projects into Rtilde on the first d' axes."""
    if not 1 <= dprime <= S.d:
        raise ValueError(f"d' = {dprime} outside 1..{S.d}")
    if Rtilde.dim != dprime:
        raise ValueError("Rtilde must live in R^{d'}")
    j0, c0_ = _cube_arrays(Rtilde)
    mask = spatial_within(S.scale, S.corner[:, :dprime], j0, c0_[None, :])
    return S.subset(mask)


def spatial_projection(S: TileCollection, R0: DyadicCube) -> set:
    """Spatial cubes of S inside R0, together with R0 itself."""
    loc = localize(S, R0)
    out = {R0}
    for j, c in set(zip(loc.scale.tolist(), map(tuple, loc.corner.tolist()))):
        out.add(DyadicCube(S.d, j, c))
    return out


# ---------------------------------------------------------------------------
# trees

@dataclass
class Tree:
    """A j-tree inside a collection.

    Attributes
    ----------
    top : MultiTile
        Top; only slot ``j`` carries a frequency cube.
    members : ndarray of int
        Indices into ``collection``.
    j : int
        Slot, numbered 1..n+1.
    kind : str
        ``"lacunary"`` or ``"overlapping"``.
    axis_tags : ndarray of int
        Per member, the first axis i with (omega_T)_i disjoint from
        (3 omega_s)_i, or -1 when there is none.
    collection : TileCollection
    """

    top: MultiTile
    members: np.ndarray
    j: int
    kind: str
    axis_tags: np.ndarray
    collection: TileCollection = field(repr=False, default=None)

    @property
    def coordinate_types(self) -> dict:
        n1 = len(self.top.freqs)
        return {jj: (self.kind if jj == self.j else "none") for jj in range(1, n1 + 1)}

    @property
    def top_measure(self) -> float:
        return float(self.top.spatial.measure)

    def __len__(self):
        return len(self.members)


def _tile_sort_key(S: TileCollection, i: int):
    return (-int(S.scale[i]), tuple(S.corner[i].tolist()),
            tuple(S.fcorner[i].ravel().tolist()), tuple(S.fshift3[i].ravel().tolist()))


def tree_order(S: TileCollection, idx=None) -> np.ndarray:
    """Indices sorted by (scale descending, corner, frequency corner)."""
    idx = np.arange(len(S)) if idx is None else np.asarray(idx)
    return np.array(sorted(idx.tolist(), key=lambda i: _tile_sort_key(S, i)), dtype=np.int64)


def _axis_tags(S, members, j, lT, mT, rT):
    """First axis where omega_T and 3 omega_s are disjoint, else -1."""
    l_s = -S.scale[members][:, None]
    m_s = S.fcorner[members, j]
    r_s = S.fshift3[members, j] * shift_sign(l_s)
    rT = rT * shift_sign(lT)
    p_s = _p2(l_s)
    cen = p_s * (6 * m_s + 2 * r_s + 3)
    half = 9 * p_s
    pT = _p2(lT)
    loT = pT * (6 * mT + 2 * rT)
    hiT = loT + 6 * pT
    disjoint = (hiT <= cen - half) | (loT >= cen + half)
    tags = np.where(disjoint.any(axis=1), disjoint.argmax(axis=1), -1)
    return tags.astype(np.int64)


def lacunary_members(S: TileCollection, idx, j, RT: DyadicCube, wT: DyadicCube, c0=C0_DEFAULT,
                     strict=True) -> np.ndarray:
    """Indices in ``idx`` whose slot-j tile (0-based j) relates to the top (RT, wT).

    ``strict=True`` selects s_j lesssim' T_j; ``strict=False`` selects
    s_j lesssim T_j.
    """
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size == 0:
        return idx
    jT, cT = _cube_arrays(RT)
    sub = spatial_within(S.scale[idx], S.corner[idx], jT, cT[None, :])
    eqR = sub & (S.scale[idx] == jT)
    l_s = -S.scale[idx][:, None]
    lT = np.int64(wT.scale)
    mT = np.asarray(wT.corner, dtype=np.int64)
    rT = np.asarray(wT.shift3, dtype=np.int64)
    m_s = S.fcorner[idx, j]
    r_s = S.fshift3[idx, j]
    inc = freq_within(l_s, m_s, r_s, lT, mT[None], rT[None], c0)
    ls = sub & inc
    if not strict:
        return idx[ls]
    in3 = freq_within(l_s, m_s, r_s, lT, mT[None], rT[None], 3)
    eqw = (m_s == mT).all(axis=1) & (r_s == rT).all(axis=1) & (l_s[:, 0] == lT)
    le = (sub & ~eqR & in3) | (eqR & eqw)
    return idx[ls & ~le]


def _overlap_members(S, idx, j, t):
    idx = np.asarray(idx, dtype=np.int64)
    jT, cT = S.scale[t], S.corner[t]
    sub = spatial_within(S.scale[idx], S.corner[idx], jT, cT[None, :])
    eqR = sub & (S.scale[idx] == jT)
    l_s = -S.scale[idx][:, None]
    m_s = S.fcorner[idx, j]
    r_s = S.fshift3[idx, j]
    in3 = freq_within(l_s, m_s, r_s, -jT, S.fcorner[t, j][None], S.fshift3[t, j][None], 3)
    eqw = (m_s == S.fcorner[t, j]).all(axis=1) & (r_s == S.fshift3[t, j]).all(axis=1)
    le = (sub & ~eqR & in3) | (eqR & eqw)
    return idx[le]


def candidate_tops(wt: DyadicCube, c0=C0_DEFAULT) -> list:
    """Frequency cubes of the same side as ``wt`` inside its c0-dilate, excluding wt."""
    out = []
    side = wt.side
    bounds = wt.bounds(c0)
    for shift in itertools.product(_SHIFTS, repeat=wt.dim):
        ranges = []
        sign = 1 if wt.scale % 2 == 0 else -1
        for (lo, hi), r in zip(bounds, shift):
            r = sign * r
            kmin = -((-(lo / side - r)) // 1)
            kmax = (hi / side - r - 1) // 1
            ranges.append(range(int(kmin), int(kmax) + 1))
        for corner in itertools.product(*ranges):
            cube = DyadicCube(wt.dim, wt.scale, corner, shift)
            if cube != wt:
                out.append(cube)
    return sorted(out, key=lambda w: (w.shift3, w.corner))


def find_trees(S: TileCollection, j: int, kind: str = "lacunary", c0=C0_DEFAULT,
               indices=None) -> list:
    """Greedy maximal j-trees covering the collection.

    Candidate tops are the remaining multi-tiles ordered by (scale
    descending, corner, frequency corner).  For ``"overlapping"`` the tree is
    every remaining s with s_j <= t_j.  For ``"lacunary"`` the top keeps the
    spatial cube of t and uses the frequency cube omega_T (same side, inside
    c0 omega_{t_j}, different from omega_{t_j}) that captures the most
    remaining tiles with s_j lesssim' T_j; ties go to the smallest
    (shift, corner).  Members leave the pool, so trees are disjoint.
    """
    if kind not in ("lacunary", "overlapping"):
        raise ValueError(f"unknown tree type {kind!r}")
    if not 1 <= j <= S.n + 1:
        raise ValueError(f"slot {j} outside 1..{S.n + 1}")
    slot = j
    j = j - 1
    remaining = list(tree_order(S, indices))
    trees = []
    while remaining:
        t = remaining[0]
        pool = np.asarray(remaining, dtype=np.int64)
        RT = S.spatial_cube(t)
        if kind == "overlapping":
            members = _overlap_members(S, pool, j, t)
            wT = S.freq_cube(t, j)
        else:
            best = None
            for wT_c in candidate_tops(S.freq_cube(t, j), c0):
                mem = lacunary_members(S, pool, j, RT, wT_c, c0)
                if best is None or len(mem) > len(best[1]):
                    best = (wT_c, mem)
            wT, members = best
        freqs = tuple(wT if jj == j else None for jj in range(S.n + 1))
        top = MultiTile(RT, freqs)
        tags = _axis_tags(S, members, j, np.int64(wT.scale), np.asarray(wT.corner),
                          np.asarray(wT.shift3))
        trees.append(Tree(top, np.sort(members), slot, kind, tags[np.argsort(members)], S))
        taken = set(members.tolist())
        remaining = [i for i in remaining if i not in taken]
    return trees
