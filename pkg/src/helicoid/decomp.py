"""Time-frequency size, tree extraction, forests and the local estimate.

The size of coefficients a_s in slot j is

    size = sup_T ( |R_T|^{-1} sum_{s in T} |a_s|^2 )^{1/2}

over j-lacunary trees T.  Any subset of a lacunary tree is lacunary for the
same top, so the supremum runs over tops (R_T, omega_T): R_T is a dyadic
cube containing some tile, omega_T any shifted frequency cube of the dual
scale.  For a fixed R_T and shift the admissible omega_T for one tile form
an integer box (inside the 9-dilate of omega_s) minus a smaller box (the
3-dilate when R_s is strictly inside R_T, or the single cube omega_s when
R_s = R_T).  The maximum of the weighted box sums is found on a
coordinate-compressed grid and then re-evaluated exactly.
"""
from __future__ import annotations

import itertools
import json
import math
from fractions import Fraction
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dyadic import (C0_DEFAULT, _axis_tags, DyadicCube, MultiTile, TileCollection, Tree, lacunary_members,
                     localize, spatial_projection, shift_sign, spatial_within)
from .errors import AnomalyError, InvalidExponentError, SizeExceedsLambdaError
from .exponents import xi_feasible
from .gridfn import GridFunction, M_DEFAULT, chi_tilde, spatial_size
from .model import ModelOperator

__all__ = [
    "Forest",
    "Decomposition",
    "SizeEngine",
    "size",
    "size_of_coefficients",
    "john_nirenberg_check",
    "decompose",
    "forest_decomposition",
    "local_estimate_ratio",
    "localized_energy",
]

_SHIFT3 = (-1, 0, 1)


def _ceil_div(a, b):
    return -((-a) // b)


class SizeEngine:
    """Exact size with per-top caching for repeated extraction.

    Parameters
    ----------
    S : TileCollection
    coeffs : array, shape (S,)
        Coefficients of slot ``slot``.
    slot : int
        0-based slot.
    c0 : int
        Dilation constant of the relation lesssim.
    """

    def __init__(self, S: TileCollection, coeffs, slot: int, c0=C0_DEFAULT):
        self.S = S
        self.slot = int(slot)
        self.c0 = int(c0)
        self.w = np.abs(np.asarray(coeffs)) ** 2
        if self.w.ndim != 1 or self.w.shape[0] != len(S):
            raise ValueError("one scalar coefficient per multi-tile is required")
        self.active = np.ones(len(S), dtype=bool)
        cands = set()
        for jj, c in zip(S.scale.tolist(), S.corner.tolist()):
            for up in range(jj, 1):
                cands.add((up, tuple(x >> (up - jj) for x in c)))
        self.candidates = sorted(cands, key=lambda rc: (-rc[0], rc[1]))
        self._best = {}
        for cand in self.candidates:
            self._best[cand] = self._evaluate(cand)

    # -- per-candidate maximisation
    def _evaluate(self, cand):
        jT, cT = cand
        S, slot, d = self.S, self.slot, self.S.d
        inside = self.active & spatial_within(S.scale, S.corner, np.int64(jT), np.asarray(cT)[None, :])
        idx = np.flatnonzero(inside & (self.w > 0))
        if idx.size == 0:
            return 0.0, None
        pT = 1 << (-jT)
        ps = np.left_shift(1, -S.scale[idx])[:, None]
        # effective offsets; r below is an effective offset too
        eff = S.fshift3[idx, slot] * shift_sign(-S.scale[idx])[:, None]
        cen = ps * (6 * S.fcorner[idx, slot] + 2 * eff + 3)
        strict = S.scale[idx] < jT
        w = self.w[idx]
        best = (-1.0, None)
        for r in itertools.product(_SHIFT3, repeat=d):
            r = np.asarray(r)
            lo9 = _ceil_div(cen - 3 * self.c0 * ps - 2 * pT * r, 6 * pT)
            hi9 = (cen + 3 * self.c0 * ps - pT * (2 * r + 6)) // (6 * pT)
            boxes_lo = [lo9]
            boxes_hi = [hi9]
            signs = [w]
            if strict.any():
                lo3 = _ceil_div(cen[strict] - 9 * ps[strict] - 2 * pT * r, 6 * pT)
                hi3 = (cen[strict] + 9 * ps[strict] - pT * (2 * r + 6)) // (6 * pT)
                boxes_lo.append(lo3)
                boxes_hi.append(hi3)
                signs.append(-w[strict])
            eq = ~strict & (eff == r).all(axis=1)
            if eq.any():
                m = S.fcorner[idx[eq], slot]
                boxes_lo.append(m)
                boxes_hi.append(m)
                signs.append(-w[eq])
            lo = np.concatenate(boxes_lo)
            hi = np.concatenate(boxes_hi)
            sg = np.concatenate(signs)
            keep = (lo <= hi).all(axis=1)
            lo, hi, sg = lo[keep], hi[keep], sg[keep]
            val, m = _max_box_sum(lo, hi, sg)
            if val > best[0] + 1e-15 * max(1.0, val):
                best = (val, (tuple(int(x) for x in r), m))
        if best[1] is None or best[0] <= 0:
            return 0.0, None
        r, m = best[1]
        RT = DyadicCube(d, jT, cT)
        sign = int(shift_sign(-jT))
        wT = DyadicCube(d, -jT, m, tuple(Fraction(sign * x, 3) for x in r))
        members = lacunary_members(S, np.flatnonzero(inside), slot, RT, wT, self.c0)
        exact = float(self.w[members].sum()) / float(RT.measure)
        return exact, wT

    def value(self, cand) -> float:
        return self._best[cand][0]

    def size(self) -> float:
        if not self._best:
            return 0.0
        return math.sqrt(max(v for v, _ in self._best.values()))

    def argmax(self):
        """(value, R_T, omega_T) of the largest squared size."""
        best = None
        for cand in self.candidates:
            v, wT = self._best[cand]
            if wT is not None and (best is None or v > best[0]):
                best = (v, DyadicCube(self.S.d, cand[0], cand[1]), wT)
        return best

    def offending(self, threshold_sq: float):
        """Largest R_T whose best top exceeds the squared threshold.

        Ties at equal scale go to the larger value, then lexicographic corner.
        """
        pick = None
        for cand in self.candidates:
            v, wT = self._best[cand]
            if wT is None or v <= threshold_sq:
                continue
            key = (cand[0], v)
            if pick is None or key[0] > pick[0][0] or (key[0] == pick[0][0] and key[1] > pick[0][1]):
                pick = (key, cand, wT)
        if pick is None:
            return None
        _, cand, wT = pick
        return DyadicCube(self.S.d, cand[0], cand[1]), wT

    def remove(self, idx) -> None:
        """Deactivate tiles and refresh the tops that contained them."""
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            return
        self.active[idx] = False
        touched = set()
        for jj, c in zip(self.S.scale[idx].tolist(), self.S.corner[idx].tolist()):
            for up in range(jj, 1):
                touched.add((up, tuple(x >> (up - jj) for x in c)))
        for cand in touched:
            self._best[cand] = self._evaluate(cand)


def _max_box_sum(lo: np.ndarray, hi: np.ndarray, w: np.ndarray):
    """Maximum over integer points of sum_i w_i [lo_i <= m <= hi_i], and a maximiser."""
    d = lo.shape[1]
    coords = []
    pos_lo, pos_hi = [], []
    for ax in range(d):
        c = np.unique(np.concatenate([lo[:, ax], hi[:, ax] + 1]))
        coords.append(c)
        pos_lo.append(np.searchsorted(c, lo[:, ax]))
        pos_hi.append(np.searchsorted(c, hi[:, ax] + 1))
    grid = np.zeros(tuple(len(c) for c in coords))
    for bits in itertools.product((0, 1), repeat=d):
        at = tuple(pos_hi[ax] if b else pos_lo[ax] for ax, b in enumerate(bits))
        np.add.at(grid, at, w * (-1) ** sum(bits))
    for ax in range(d):
        grid = np.cumsum(grid, axis=ax)
    flat = int(np.argmax(grid))
    where = np.unravel_index(flat, grid.shape)
    return float(grid[where]), tuple(int(coords[ax][where[ax]]) for ax in range(d))


def size_of_coefficients(S: TileCollection, coeffs, slot: int, c0=C0_DEFAULT, mode: str = "exact") -> float:
    """Size of a coefficient sequence over slot ``slot`` (0-based).

    ``mode="bound"`` drops the frequency constraint and returns the
    upper bound sup_R (|R|^{-1} sum_{R_s in R} |a_s|^2)^{1/2}, meant for
    collections too large for exact enumeration.
    """
    if len(S) == 0:
        return 0.0
    if mode == "bound":
        w = np.abs(np.asarray(coeffs)) ** 2
        best = 0.0
        cands = {(up, tuple(x >> (up - jj) for x in c))
                 for jj, c in zip(S.scale.tolist(), S.corner.tolist()) for up in range(jj, 1)}
        for jT, cT in cands:
            m = spatial_within(S.scale, S.corner, np.int64(jT), np.asarray(cT)[None, :])
            best = max(best, float(w[m].sum()) * 2.0 ** (-S.d * jT))
        return math.sqrt(best)
    if mode != "exact":
        raise ValueError(f"unknown size mode {mode!r}")
    return SizeEngine(S, coeffs, slot, c0).size()


def size(T: ModelOperator, f: GridFunction, j: int, subset=None, mode: str = "exact") -> float:
    """Size of <f, phi^j_{s_j}> over the operator's collection (slot j in 1..n+1)."""
    idx = T._select(subset)
    sub = T.collection.subset(idx)
    return size_of_coefficients(sub, T.coefficients(f, j - 1)[idx], j - 1, mode=mode)


def john_nirenberg_check(T: ModelOperator, f: GridFunction, j: int, subset=None,
                         M: int = M_DEFAULT) -> float:
    """size(<f, phi^j>) divided by the chi-tilde spatial size of f (0 when f vanishes)."""
    idx = T._select(subset)
    sub = T.collection.subset(idx)
    if len(sub) == 0:
        return 0.0
    num = size_of_coefficients(sub, T.coefficients(f, j - 1)[idx], j - 1)
    den = spatial_size(f, sub, 1, "chi_tilde", M)
    if den == 0.0:
        if num > 1e-14:
            raise AnomalyError(f"size {num} with vanishing spatial size")
        return 0.0
    return num / den


@dataclass
class Forest:
    """Trees extracted at one size level.

    Attributes
    ----------
    level : int or None
        l with size ~ 2^{-l}; ``None`` marks the residual level.
    slot : int
        1-based slot.
    trees : list of Tree
    sizes : list of float
        Measured size of each tree's members.
    energy : float
        Sum of |R_T|.
    energy_ratio : float
        energy * lambda^2 / ||f chi_{R0}||_2^2.
    """

    level: int | None
    slot: int
    trees: list = field(default_factory=list)
    sizes: list = field(default_factory=list)
    energy: float = 0.0
    energy_ratio: float = 0.0

    def members(self) -> np.ndarray:
        if not self.trees:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([t.members for t in self.trees])

    def to_dict(self) -> dict:
        return {
            "level": self.level,
            "slot": self.slot,
            "energy": self.energy,
            "energy_ratio": self.energy_ratio,
            "trees": [{"top_scale": t.top.spatial.scale, "top_corner": list(t.top.spatial.corner),
                       "size": s, "members": len(t.members)} for t, s in zip(self.trees, self.sizes)],
        }


@dataclass
class Decomposition:
    """Result of :func:`decompose`.

    Attributes
    ----------
    remaining : ndarray of int
        Indices of S' into the input collection.
    forest : Forest
    size_before, size_after : float
    """

    remaining: np.ndarray
    forest: Forest
    size_before: float
    size_after: float


def localized_energy(f: GridFunction, R0: DyadicCube | None = None, M: int = M_DEFAULT) -> float:
    """||f chi_{R0}||_2^2, or ||f||_2^2 without R0."""
    a = np.abs(f.samples) ** 2
    if R0 is not None:
        a = a * chi_tilde(f.d, f.J, R0, M) ** 2
    return float(a.sum() / f.N ** f.d)


def _extract_tree(engine: SizeEngine, RT: DyadicCube, wT: DyadicCube, slot: int) -> Tree:
    S = engine.S
    pool = np.flatnonzero(engine.active)
    members = lacunary_members(S, pool, slot, RT, wT, engine.c0, strict=False)
    freqs = tuple(wT if jj == slot else None for jj in range(S.n + 1))
    tags = _axis_tags(S, members, slot, np.int64(wT.scale), np.asarray(wT.corner), np.asarray(wT.shift3))
    return Tree(MultiTile(RT, freqs), members, slot + 1, "lacunary", tags, S)


def _run_level(engine: SizeEngine, lam: float, R0, f, level, slot, energy_den) -> Forest:
    forest = Forest(level, slot + 1)
    thr = (lam / 2) ** 2
    while True:
        pick = engine.offending(thr)
        if pick is None:
            break
        RT, wT = pick
        tree = _extract_tree(engine, RT, wT, slot)
        sub = engine.S.subset(tree.members)
        forest.sizes.append(size_of_coefficients(sub, np.sqrt(engine.w[tree.members]), slot, engine.c0))
        forest.trees.append(tree)
        forest.energy += float(RT.measure)
        engine.remove(tree.members)
    forest.energy_ratio = forest.energy * lam ** 2 / energy_den if energy_den > 0 else 0.0
    return forest


def decompose(T: ModelOperator, f: GridFunction, j: int, lam: float, R0: DyadicCube | None = None,
              subset=None, M: int = M_DEFAULT) -> Decomposition:
    """Split a collection at level lambda by greedy tree extraction.

    While the size of the remaining tiles exceeds lambda/2, the top with the
    largest spatial cube among offending tops is selected and every
    remaining s with s_j lesssim T_j (the lacunary tree plus its ordered
    completion) is moved to the forest.

    Raises
    ------
    SizeExceedsLambdaError
        If the initial size exceeds lambda.
    """
    idx = T._select(subset)
    S = T.collection.subset(idx)
    slot = j - 1
    engine = SizeEngine(S, T.coefficients(f, slot)[idx], slot)
    before = engine.size()
    if before > lam * (1 + 1e-12):
        raise SizeExceedsLambdaError(f"size {before} exceeds lambda {lam}")
    forest = _run_level(engine, lam, R0, f, None, slot, localized_energy(f, R0, M))
    for t in forest.trees:
        t.members = idx[t.members]
        t.collection = T.collection
    after = engine.size()
    return Decomposition(idx[np.flatnonzero(engine.active)], forest, before, after)


def forest_decomposition(T: ModelOperator, fs: Sequence[GridFunction], subset=None, levels: int = 40,
                         R0: DyadicCube | None = None, M: int = M_DEFAULT) -> dict:
    """Per-slot forests at lambda = 2^{-l}, l = floor(-log2 size), ... for ``levels`` levels.

    Tiles left after the last level (zero or negligible coefficients) go
    into a residual forest with ``level=None`` holding one tree.
    """
    idx = T._select(subset)
    S = T.collection.subset(idx)
    out = {}
    for slot, f in enumerate(fs):
        forests = []
        if len(S) == 0:
            out[slot + 1] = forests
            continue
        engine = SizeEngine(S, T.coefficients(f, slot)[idx], slot)
        s0 = engine.size()
        den = localized_energy(f, R0, M)
        if s0 > 0:
            l0 = math.floor(-math.log2(s0))
            for level in range(l0, l0 + levels):
                if not engine.active.any():
                    break
                fr = _run_level(engine, 2.0 ** (-level), R0, f, level, slot, den)
                if fr.trees:
                    forests.append(fr)
        rest = np.flatnonzero(engine.active)
        if rest.size:
            torus = DyadicCube(S.d, 0, (0,) * S.d)
            top = MultiTile(torus, (None,) * (S.n + 1))
            forests.append(Forest(None, slot + 1,
                                  [Tree(top, rest, slot + 1, "residual", -np.ones(rest.size, np.int64), S)],
                                  [size_of_coefficients(S.subset(rest), np.sqrt(engine.w[rest]), slot)]))
        for fr in forests:
            for t in fr.trees:
                t.members = idx[t.members]
                t.collection = T.collection
        out[slot + 1] = forests
    return out


def forests_to_json(forests: dict) -> str:
    return json.dumps({str(k): [fr.to_dict() for fr in v] for k, v in forests.items()}, indent=1)


def local_estimate_ratio(T: ModelOperator, R0: DyadicCube, Es: Sequence[GridFunction], alpha,
                         M: int = M_DEFAULT) -> float:
    """|Lambda_{S(R0)}(1_{E_1}, ..., 1_{E_{n+1}})| / (prod_j size~_{R0}(1_{E_j})^{1 - alpha_j} |R0|).

    Raises
    ------
    InvalidExponentError
        If alpha is not admissible for (n, k).
    AnomalyError
        If a spatial size vanishes while the form does not.
    """
    S = T.collection
    if not xi_feasible(S.n, S.k, alpha):
        raise InvalidExponentError(f"alpha {list(map(str, alpha))} is not admissible for n={S.n}, k={S.k}")
    alpha = [float(Fraction(a)) if isinstance(a, str) else float(a) for a in alpha]
    loc = localize(S, R0)
    if len(loc) == 0:
        return 0.0
    pos = {k: i for i, k in enumerate(S.keys())}
    idx = np.array([pos[k] for k in loc.keys()], dtype=np.int64)
    lam = abs(T.form(Es, idx))
    cubes = spatial_projection(S, R0)
    den = float(R0.measure)
    for E, a in zip(Es, alpha):
        den *= spatial_size(E, cubes, 1, "chi_tilde", M) ** (1 - a)
    if den == 0.0:
        if lam > 1e-12:
            raise AnomalyError(f"form {lam} with a vanishing spatial size")
        return 0.0
    return lam / den
