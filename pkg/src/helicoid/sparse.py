"""Sparse collections of dyadic cubes with explicit witness sets.

Witness sets live on the grid, so every condition is checked by counting
cells.  Measures are kept as integer cell counts.
"""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dyadic import DyadicCube
from .errors import AnomalyError, SparseConstructionError
from .exponents import exponent
from .gridfn import GridFunction, NormSpec, dyadic_averages, mixed_norm

__all__ = [
    "SparseCollection",
    "SparseCheck",
    "verify_sparse",
    "carleson_packing",
    "build_sparse",
    "sparse_form",
    "sparse_domination_ratio",
]


def _cells(R: DyadicCube, J: int) -> int:
    return (1 << (J + R.scale)) ** R.dim


def _cube_mask(R: DyadicCube, J: int) -> np.ndarray:
    N = 1 << J
    side = N >> (-R.scale)
    mask = np.zeros((N,) * R.dim, dtype=bool)
    mask[tuple(slice(c * side, (c + 1) * side) for c in R.corner)] = True
    return mask


@dataclass
class SparseCollection:
    """Dyadic cubes with pairwise disjoint witness sets.

    Attributes
    ----------
    d, J : int
    eta : Fraction
    cubes : list of DyadicCube
    witnesses : dict
        Cube to boolean grid array E_Q.
    generations : list of list of DyadicCube
        Construction generations, when built by :func:`build_sparse`.
    """

    d: int
    J: int
    eta: Fraction
    cubes: list = field(default_factory=list)
    witnesses: dict = field(default_factory=dict)
    generations: list = field(default_factory=list)

    def __post_init__(self):
        self.eta = Fraction(self.eta)
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")

    def __len__(self):
        return len(self.cubes)

    def to_json(self) -> str:
        rows = []
        for Q in self.cubes:
            bits = np.packbits(self.witnesses[Q].ravel())
            rows.append({"scale": Q.scale, "corner": list(Q.corner),
                         "witness": base64.b64encode(bits.tobytes()).decode()})
        return json.dumps({"d": self.d, "J": self.J, "eta": str(self.eta), "cubes": rows})

    @classmethod
    def from_json(cls, text: str) -> "SparseCollection":
        obj = json.loads(text)
        d, J = obj["d"], obj["J"]
        N = 1 << J
        out = cls(d, J, Fraction(obj["eta"]))
        for row in obj["cubes"]:
            Q = DyadicCube(d, row["scale"], tuple(row["corner"]))
            bits = np.frombuffer(base64.b64decode(row["witness"]), dtype=np.uint8)
            out.cubes.append(Q)
            out.witnesses[Q] = np.unpackbits(bits)[:N ** d].astype(bool).reshape((N,) * d)
        return out


@dataclass(frozen=True)
class SparseCheck:
    """Outcome of :func:`verify_sparse`; ``cube`` names the first violation."""

    ok: bool
    reason: str = ""
    cube: DyadicCube | None = None

    def __bool__(self):
        return self.ok


def _direct_children(cubes: list) -> dict:
    """Maximal members strictly inside each cube."""
    members = set(cubes)
    out = {Q: [] for Q in cubes}
    for P in cubes:
        # the nearest strict ancestor in the collection is P's parent in the tree
        for up in range(P.scale + 1, 1):
            A = P.ancestor(up)
            if A in members:
                out[A].append(P)
                break
    return out


def verify_sparse(c: SparseCollection) -> SparseCheck:
    """Witness and child conditions, checked exactly on the grid."""
    N = 1 << c.J
    cover = np.zeros((N,) * c.d, dtype=np.int64)
    for Q in c.cubes:
        E = c.witnesses.get(Q)
        if E is None:
            return SparseCheck(False, "missing witness", Q)
        if (E & ~_cube_mask(Q, c.J)).any():
            return SparseCheck(False, "witness leaves its cube", Q)
        if Fraction(int(E.sum())) < c.eta * _cells(Q, c.J):
            return SparseCheck(False, "witness below eta |Q|", Q)
        cover += E
    if (cover > 1).any():
        bad = np.argwhere(cover > 1)[0]
        for Q in c.cubes:
            if c.witnesses[Q][tuple(bad)]:
                return SparseCheck(False, "witnesses overlap", Q)
    for Q, kids in _direct_children(c.cubes).items():
        if sum(_cells(P, c.J) for P in kids) > (1 - c.eta) * _cells(Q, c.J):
            return SparseCheck(False, "children exceed (1 - eta) |Q|", Q)
    return SparseCheck(True)


def carleson_packing(c: SparseCollection) -> Fraction:
    """max over all dyadic Q0 of sum_{Q in c, Q inside Q0} |Q| / |Q0|.

    Sparseness implies the value is at most 1/eta.
    """
    tables = {}
    for Q in c.cubes:
        m = _cells(Q, c.J)
        for up in range(Q.scale, 1):
            A = Q.ancestor(up)
            tables[A] = tables.get(A, 0) + m
    if not tables:
        return Fraction(0)
    return max(Fraction(v, _cells(A, c.J)) for A, v in tables.items())


def _level(f: GridFunction, scale: int, e) -> np.ndarray:
    """ave_P |f|^e over all P of a scale (sup for e = inf)."""
    p = exponent(e)
    a = dyadic_averages(f, scale, p)
    return a if p.is_infinite else a ** float(1 / p.recip)


def build_sparse(fs: Sequence[GridFunction], s: Sequence, q, v: GridFunction, top: DyadicCube,
                 C: float | None = None, eta=Fraction(1, 2)) -> SparseCollection:
    """Stopping-time sparse collection below ``top``.

    The tracked quantities are |f_j|^{s_j} and |v|^{s_{n+1}}.  The children
    of Q are the maximal dyadic P strictly inside Q on which some tracked
    average exceeds C times its average on Q; E_Q is Q minus the children.

    Raises
    ------
    SparseConstructionError
        If the children of some cube cover more than (1 - eta) |Q|.
    """
    if len(s) != len(fs) + 1:
        raise ValueError("need one exponent per input plus one for v")
    d, J = top.dim, v.J
    C = float(2 ** (d + 2) if C is None else C)
    eta = Fraction(eta)
    tr = list(zip(list(fs) + [v], s))
    out = SparseCollection(d, J, eta)
    gen = [top]
    while gen:
        out.generations.append(list(gen))
        nxt = []
        for Q in gen:
            base = [float(_level(h, Q.scale, e)[Q.corner]) for h, e in tr]
            covered = np.zeros((1,) * d, dtype=bool)
            kids = []
            for j in range(Q.scale - 1, -J - 1, -1):
                for ax in range(d):
                    covered = np.repeat(covered, 2, axis=ax)
                sh = Q.scale - j
                sl = tuple(slice(c << sh, (c + 1) << sh) for c in Q.corner)
                trig = np.zeros(covered.shape, dtype=bool)
                for (h, e), b in zip(tr, base):
                    trig |= _level(h, j, e)[sl] > C * b
                new = trig & ~covered
                for loc in np.argwhere(new):
                    kids.append(DyadicCube(d, j, tuple(int((c << sh) + x) for c, x in zip(Q.corner, loc))))
                covered |= trig
            mass = sum(_cells(P, J) for P in kids)
            ratio = Fraction(mass, _cells(Q, J))
            if ratio > 1 - eta:
                raise SparseConstructionError(
                    f"children cover {float(ratio):.3f} of {Q}; increase C", float(ratio))
            E = _cube_mask(Q, J)
            for P in kids:
                E &= ~_cube_mask(P, J)
            out.cubes.append(Q)
            out.witnesses[Q] = E
            nxt.extend(kids)
        gen = nxt
    return out


def sparse_form(c: SparseCollection, fs: Sequence[GridFunction], s: Sequence, q, v: GridFunction,
                weight="indicator") -> float:
    """sum_Q prod_j (ave_Q |f_j|^{s_j})^{q/s_j} (ave_Q |v|^{s_{n+1}})^{q/s_{n+1}} |Q|."""
    qf = float(exponent(q).p)
    total = 0.0
    for Q in c.cubes:
        term = float(Q.measure)
        for f, e in zip(list(fs) + [v], s):
            term *= float(dyadic_averages(f, Q.scale, e, weight)[Q.corner]) ** qf
        total += term
    return total


def sparse_domination_ratio(g: GridFunction, c: SparseCollection, fs, s, q, v: GridFunction,
                            weight="indicator") -> float:
    """||g v||_q^q / sparse_form, 0 when both vanish."""
    qf = float(exponent(q).p)
    num = mixed_norm(g * v, NormSpec.uniform(g.d, q)) ** qf
    den = sparse_form(c, fs, s, q, v, weight)
    if den == 0.0:
        if num > 1e-14:
            raise AnomalyError("nonzero operator output with a vanishing sparse form")
        return 0.0
    return num / den
