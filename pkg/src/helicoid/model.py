"""The discretized model operator and its multilinear forms.

For a collection S and packets phi^j,

    T(f_1, ..., f_n) = sum_s |R_s|^{-(n-1)/2} prod_j <f_j, phi^j_{s_j}> conj(phi^{n+1}_{s_{n+1}}),

    Lambda(f_1, ..., f_{n+1}) = sum_s |R_s|^{-(n-1)/2} prod_{j=1}^{n+1} <f_j, phi^j_{s_j}>,

so that the integral of T(f_1, ..., f_n) f_{n+1} equals Lambda exactly.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .dyadic import TileCollection, Tree
from .errors import ResolutionError
from .gridfn import GridFunction
from .wavepackets import PROFILES, analysis_matrix

__all__ = ["ModelOperator", "apply", "form", "tree_form_ratio"]


def _broadcast(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Product of per-tile arrays whose trailing vector axes may differ in rank."""
    a = a.reshape(a.shape + (1,) * max(0, b.ndim - a.ndim))
    b = b.reshape(b.shape + (1,) * max(0, a.ndim - b.ndim))
    return a * b


class ModelOperator:
    """Model operator over a finite collection on the grid 2^J.

    Parameters
    ----------
    collection : TileCollection
    J : int
        Grid resolution exponent.
    profiles : str or sequence of str
        Packet profile, one for all slots or one per slot.
    """

    def __init__(self, collection: TileCollection, J: int, profiles="raised_cosine"):
        self.collection = collection
        self.J = int(J)
        n1 = collection.n + 1
        if isinstance(profiles, str):
            profiles = (profiles,) * n1
        profiles = tuple(profiles)
        if len(profiles) != n1 or any(p not in PROFILES for p in profiles):
            raise ValueError(f"need {n1} profiles from {PROFILES}")
        if len(collection) and -int(collection.scale.min()) > self.J:
            raise ResolutionError("collection has spatial cubes finer than the grid")
        self.profiles = profiles
        self._mats = {}

    @property
    def n(self) -> int:
        return self.collection.n

    @property
    def d(self) -> int:
        return self.collection.d

    @property
    def N(self) -> int:
        return 1 << self.J

    def __repr__(self):
        return f"ModelOperator({self.collection!r}, J={self.J})"

    def matrix(self, slot: int):
        """Analysis matrix of slot ``slot`` (0-based), built once."""
        if slot not in self._mats:
            self._mats[slot] = analysis_matrix(self.collection, slot, self.J, self.profiles[slot])
        return self._mats[slot]

    def weight(self) -> np.ndarray:
        """|R_s|^{-(n-1)/2} per multi-tile."""
        return np.ldexp(1.0, -self.d * self.collection.scale * (self.n - 1)) ** 0.5

    def coefficients(self, f: GridFunction, slot: int) -> np.ndarray:
        """<f, phi^slot_s> for every s; shape (S,) or (S, |W|)."""
        if (f.d, f.J) != (self.d, self.J):
            raise ResolutionError(f"function grid ({f.d}, {f.J}) vs operator grid ({self.d}, {self.J})")
        fh = f._cache.get("spectrum")
        if fh is None:
            fh = f.spectrum()
            fh.setflags(write=False)
            f._cache["spectrum"] = fh
        flat = fh.reshape(self.N ** self.d, -1)
        c = self.matrix(slot) @ flat
        return c[:, 0] if f.is_scalar else c.reshape((len(self.collection),) + fh.shape[self.d:])

    def _select(self, subset) -> np.ndarray:
        S = self.collection
        if subset is None:
            return np.arange(len(S))
        if isinstance(subset, Tree):
            return np.asarray(subset.members)
        if isinstance(subset, TileCollection):
            pos = {k: i for i, k in enumerate(S.keys())}
            try:
                return np.array([pos[k] for k in subset.keys()], dtype=np.int64)
            except KeyError as exc:
                raise ValueError("subset contains a multi-tile outside the collection") from exc
        idx = np.asarray(subset)
        return np.flatnonzero(idx) if idx.dtype == bool else idx.astype(np.int64)

    def products(self, fs: Sequence[GridFunction], subset=None) -> np.ndarray:
        """Per-tile summands |R_s|^{-(n-1)/2} prod_j <f_j, phi^j_{s_j}>."""
        if len(fs) != self.n + 1:
            raise ValueError(f"form needs {self.n + 1} functions, got {len(fs)}")
        idx = self._select(subset)
        out = self.weight()[idx]
        for j, f in enumerate(fs):
            c = self.coefficients(f, j)[idx]
            out = _broadcast(out, c)
        return out

    def apply(self, fs: Sequence[GridFunction], subset=None) -> GridFunction:
        """T(f_1, ..., f_n) as a function on the grid."""
        if len(fs) != self.n:
            raise ValueError(f"operator takes {self.n} functions, got {len(fs)}")
        idx = self._select(subset)
        N, d = self.N, self.d
        c = self.weight()[idx]
        weights = ()
        for j, f in enumerate(fs):
            cj = self.coefficients(f, j)[idx]
            if not f.is_scalar:
                weights = weights + tuple(f.weights)
            c = _broadcast(c, cj)
        wshape = c.shape[1:]
        A = self.matrix(self.n)[idx]
        # conj(phi)(x) has spectrum conj(phi_hat(m)) at bin -m
        flat = c.reshape(len(idx), int(np.prod(wshape, dtype=np.int64)))
        spec = np.asarray(A.T @ flat).reshape((N,) * d + wshape)
        axes = tuple(range(d))
        spec = np.roll(np.flip(spec, axis=axes), 1, axis=axes)
        return GridFunction.from_spectrum(d, self.J, spec, weights)

    def form(self, fs: Sequence[GridFunction], subset=None):
        """Lambda restricted to ``subset`` (a TileCollection, tree, mask or indices)."""
        val = self.products(fs, subset).sum(axis=0)
        return complex(val) if np.ndim(val) == 0 else val


def apply(T: ModelOperator, fs, subset=None) -> GridFunction:
    """Functional form of :meth:`ModelOperator.apply`."""
    return T.apply(fs, subset)


def form(T: ModelOperator, fs, subset=None):
    """Functional form of :meth:`ModelOperator.form`."""
    return T.form(fs, subset)


def tree_form_ratio(T: ModelOperator, tree: Tree, fs: Sequence[GridFunction]) -> tuple:
    """(|Lambda_T|, prod_j size_T(<f_j, phi^j>) |R_T|, ratio) for one tree.

    The ratio is 0 when both sides vanish.
    """
    from .decomp import size_of_coefficients

    idx = np.asarray(tree.members)
    sub = T.collection.subset(idx)
    lam = abs(T.form(fs, idx))
    bound = float(tree.top.spatial.measure)
    for j, f in enumerate(fs):
        bound *= size_of_coefficients(sub, T.coefficients(f, j)[idx], j)
    if bound == 0.0:
        return lam, 0.0, 0.0 if lam < 1e-300 else float("inf")
    return lam, bound, lam / bound
