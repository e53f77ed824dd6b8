"""scikit-learn style wrappers around the operators.

Inputs are stacked sample arrays of shape ``(n_samples, n_inputs) + (N,)*d``,
one row per trial, so the wrappers compose with ordinary pipelines and
parameter searches.
"""
from __future__ import annotations

from fractions import Fraction

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .dyadic import DyadicCube, TileCollection
from .gridfn import GridFunction
from .maximal import DyadicFamily, multi_maximal
from .model import ModelOperator
from .sparse import build_sparse, sparse_form, verify_sparse

__all__ = ["ModelOperatorTransformer", "MultilinearMaximalTransformer", "SparseDominator"]


def _grid_shape(X, d: int) -> tuple:
    X = np.asarray(X)
    if X.ndim != 2 + d:
        raise ValueError(f"expected an array of shape (n_samples, n_inputs) + (N,)*{d}, got {X.shape}")
    N = X.shape[2]
    J = N.bit_length() - 1
    if (1 << J) != N or any(s != N for s in X.shape[2:]):
        raise ValueError("grid sides must be equal powers of two")
    return X, J


def _functions(row, d: int, J: int) -> list:
    return [GridFunction(d, J, a) for a in row]


class ModelOperatorTransformer(TransformerMixin, BaseEstimator):
    """Evaluate T(f_1, ..., f_n) for each sample.

    Parameters
    ----------
    collection : TileCollection
    profile : str, default "raised_cosine"

    Attributes
    ----------
    operator_ : ModelOperator
    """

    def __init__(self, collection: TileCollection | None = None, profile: str = "raised_cosine"):
        self.collection = collection
        self.profile = profile

    def fit(self, X, y=None):
        if self.collection is None:
            raise ValueError("a tile collection is required")
        X, J = _grid_shape(X, self.collection.d)
        if X.shape[1] != self.collection.n:
            raise ValueError(f"operator takes {self.collection.n} inputs, got {X.shape[1]}")
        self.operator_ = ModelOperator(self.collection, J, self.profile)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        T = self.operator_
        X, J = _grid_shape(X, T.d)
        if J != T.J:
            raise ValueError(f"fitted at J={T.J}, got J={J}")
        return np.stack([T.apply(_functions(row, T.d, J)).samples for row in X])

    def form(self, X):
        """Multilinear form per sample; X carries n+1 inputs."""
        check_is_fitted(self, "operator_")
        T = self.operator_
        X, J = _grid_shape(X, T.d)
        return np.array([T.form(_functions(row, T.d, J)) for row in X])


class MultilinearMaximalTransformer(TransformerMixin, BaseEstimator):
    """Multilinear dyadic maximal function over the full lattice or given scales.

    Parameters
    ----------
    s : sequence
        One exponent per input.
    d : int, default 1
    scales : sequence of int, optional
        Cube scales; every scale of the grid when omitted.
    weight : {"indicator", "chi_tilde"}
    """

    def __init__(self, s=(1, 1), d: int = 1, scales=None, weight: str = "indicator"):
        self.s = s
        self.d = d
        self.scales = scales
        self.weight = weight

    def fit(self, X, y=None):
        X, J = _grid_shape(X, self.d)
        if X.shape[1] != len(self.s):
            raise ValueError(f"{len(self.s)} exponents for {X.shape[1]} inputs")
        self.family_ = (DyadicFamily.full(self.d, J) if self.scales is None
                        else DyadicFamily(self.d, tuple(self.scales)))
        self.J_ = J
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "family_")
        X, J = _grid_shape(X, self.d)
        if J != self.J_:
            raise ValueError(f"fitted at J={self.J_}, got J={J}")
        return np.stack([multi_maximal(_functions(row, self.d, J), self.s, self.family_, self.weight).samples
                         for row in X])


class SparseDominator(BaseEstimator):
    """Build one sparse collection per sample by the stopping time.

    The last input of each sample is the dual function v.

    Parameters
    ----------
    s : sequence
        Exponents for the inputs and v.
    q : exponent
    d : int, default 1
    C : float, optional
        Jump factor; 2^{d+2} when omitted.
    eta : Fraction, default 1/2

    Attributes
    ----------
    collections_ : list of SparseCollection
    """

    def __init__(self, s=(2, 2, 2), q=1, d: int = 1, C=None, eta=Fraction(1, 2)):
        self.s = s
        self.q = q
        self.d = d
        self.C = C
        self.eta = eta

    def fit(self, X, y=None):
        X, J = _grid_shape(X, self.d)
        if X.shape[1] != len(self.s):
            raise ValueError(f"{len(self.s)} exponents for {X.shape[1]} inputs")
        top = DyadicCube(self.d, 0, (0,) * self.d)
        self.collections_ = []
        for row in X:
            fs = _functions(row, self.d, J)
            self.collections_.append(build_sparse(fs[:-1], self.s, self.q, fs[-1], top, self.C, self.eta))
        self.J_ = J
        return self

    def sparse_forms(self, X):
        """Sparse form of each sample against its fitted collection."""
        check_is_fitted(self, "collections_")
        X, J = _grid_shape(X, self.d)
        if len(X) != len(self.collections_):
            raise ValueError("X must be the data the estimator was fitted on")
        out = []
        for row, c in zip(X, self.collections_):
            fs = _functions(row, self.d, J)
            out.append(sparse_form(c, fs[:-1], self.s, self.q, fs[-1]))
        return np.array(out)

    def score(self, X=None, y=None) -> float:
        """Fraction of fitted collections passing the sparseness check."""
        check_is_fitted(self, "collections_")
        return float(np.mean([bool(verify_sparse(c)) for c in self.collections_]))
