"""Exact rational algebra of Lebesgue exponent tuples.

Exponents are stored through their reciprocals as ``Fraction`` values, with
reciprocal 0 standing for p = infinity.  Every condition handled here is
linear in the reciprocals, so all decisions are exact.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import MalformedTupleError, RankConstraintError, UnsupportedMapError

__all__ = [
    "LebesgueExponent",
    "ExponentTuple",
    "ThetaVector",
    "AlphaTuple",
    "MixedExponent",
    "RangeDecision",
    "CoordinateProjection",
    "exponent",
    "exponent_tuple",
    "is_holder_tuple",
    "is_local",
    "alpha_from_theta",
    "theta_for_alpha",
    "xi_feasible",
    "range_membership",
    "max_slack",
    "is_brascamp_lieb_tuple",
    "finner_condition",
    "finner_failing_axis",
    "tuple_to_json",
    "tuple_from_json",
    "scan_to_csv",
]

HALF = Fraction(1, 2)


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, float):
        # floats are taken at their shortest decimal repr, so 0.4 -> 2/5
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True, order=True)
class LebesgueExponent:
    """A Lebesgue exponent p stored as its reciprocal.

    Parameters
    ----------
    recip : Fraction
        The value 1/p.  Zero encodes p = infinity.  Negative values are
        admitted because the dual slot of a Hölder tuple may carry them.
    """

    recip: Fraction

    def __post_init__(self):
        object.__setattr__(self, "recip", _frac(self.recip))

    @classmethod
    def from_p(cls, p) -> "LebesgueExponent":
        """Build from p, accepting ``"inf"``, numbers and ``"a/b"`` strings."""
        if isinstance(p, LebesgueExponent):
            return p
        if isinstance(p, str) and p.strip().lower() in ("inf", "infinity", "oo"):
            return cls(Fraction(0))
        if isinstance(p, float) and np.isinf(p):
            return cls(Fraction(0))
        p = _frac(p)
        if p == 0:
            raise MalformedTupleError("p = 0 has no reciprocal")
        return cls(1 / p)

    @property
    def is_infinite(self) -> bool:
        return self.recip == 0

    @property
    def p(self):
        """The exponent itself, ``float('inf')`` for reciprocal 0."""
        return float("inf") if self.recip == 0 else 1 / self.recip

    def dual(self) -> "LebesgueExponent":
        """Hölder conjugate, defined when ``recip <= 1``."""
        if self.recip > 1:
            raise MalformedTupleError(f"no conjugate for 1/p = {self.recip} > 1")
        return LebesgueExponent(1 - self.recip)

    def __float__(self):
        return float(self.p)

    def __str__(self):
        return "inf" if self.recip == 0 else str(1 / self.recip)


def exponent(p) -> LebesgueExponent:
    """Shorthand for :meth:`LebesgueExponent.from_p`."""
    return LebesgueExponent.from_p(p)


@dataclass(frozen=True)
class ExponentTuple:
    """Ordered tuple (p_1, ..., p_{n+1}) of Lebesgue exponents."""

    entries: tuple

    def __post_init__(self):
        entries = tuple(exponent(e) for e in self.entries)
        if len(entries) < 2:
            raise MalformedTupleError(f"arity {len(entries)} < 2")
        object.__setattr__(self, "entries", entries)

    @classmethod
    def from_recips(cls, recips: Iterable) -> "ExponentTuple":
        return cls(tuple(LebesgueExponent(r) for r in recips))

    @property
    def arity(self) -> int:
        return len(self.entries)

    @property
    def n(self) -> int:
        return len(self.entries) - 1

    @property
    def recips(self) -> tuple:
        return tuple(e.recip for e in self.entries)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __str__(self):
        return "(" + ", ".join(str(e) for e in self.entries) + ")"


def exponent_tuple(*ps) -> ExponentTuple:
    """Build an :class:`ExponentTuple` from exponent values p_j."""
    if len(ps) == 1 and not isinstance(ps[0], (str, int, float, Fraction)):
        ps = tuple(ps[0])
    return ExponentTuple(tuple(exponent(p) for p in ps))


def _as_tuple(t) -> ExponentTuple:
    if isinstance(t, ExponentTuple):
        return t
    return exponent_tuple(*t)


def is_holder_tuple(t) -> bool:
    """Decide whether a tuple is a Hölder tuple.

    The reciprocals must sum to exactly one, the first n entries must satisfy
    1 < p_j <= inf, and the conjugate of the last entry must satisfy
    1/n < p'_{n+1} < inf.

    Parameters
    ----------
    t : ExponentTuple or sequence
        Exponents p_1, ..., p_{n+1}; sequences are parsed with
        :func:`exponent_tuple`.

    Returns
    -------
    bool
    """
    if not isinstance(t, ExponentTuple):
        ps = list(t)
        if len(ps) < 2:
            raise MalformedTupleError(f"arity {len(ps)} < 2")
        t = exponent_tuple(*ps)
    r = t.recips
    n = t.n
    if sum(r) != 1:
        return False
    if any(not (0 <= x < 1) for x in r[:-1]):
        return False
    # 1/p'_{n+1} = 1 - r_{n+1} must lie in (0, n)
    dual_recip = 1 - r[-1]
    return 0 < dual_recip < n


def is_local(t, a: Sequence) -> bool:
    """True iff ``1/q_j < a_j`` for every slot (strict)."""
    t = _as_tuple(t)
    a = [_frac(x) for x in a]
    if len(a) != t.arity:
        raise MalformedTupleError(f"length mismatch: {t.arity} exponents, {len(a)} thresholds")
    return all(r < x for r, x in zip(t.recips, a))


def _check_rank(n: int, k: int):
    if n < 1 or k < 0 or 2 * k >= n + 1:
        raise RankConstraintError(f"rank k={k} violates 0 <= k < (n+1)/2 for n={n}")


@dataclass(frozen=True)
class ThetaVector:
    """Interpolation weights on the k-subsets of {0, ..., n}.

    Subsets are stored as sorted tuples of 0-based slot indices.  Missing
    subsets carry weight zero.
    """

    n: int
    k: int
    weights: Mapping

    def __post_init__(self):
        _check_rank(self.n, self.k)
        w = {}
        for key, val in dict(self.weights).items():
            key = tuple(sorted(int(i) for i in key))
            if len(key) != self.k or len(set(key)) != self.k:
                raise MalformedTupleError(f"subset {key} is not a {self.k}-subset")
            if any(i < 0 or i > self.n for i in key):
                raise MalformedTupleError(f"subset {key} out of range 0..{self.n}")
            val = _frac(val)
            if not 0 <= val <= 1:
                raise MalformedTupleError(f"weight {val} outside [0, 1]")
            if val:
                w[key] = w.get(key, Fraction(0)) + val
        total = sum(w.values(), Fraction(0))
        if self.k == 0:
            w = {(): Fraction(1)}
            total = Fraction(1)
        if total != 1:
            raise MalformedTupleError(f"weights sum to {total}, not 1")
        object.__setattr__(self, "weights", dict(sorted(w.items())))

    @classmethod
    def from_list(cls, n: int, k: int, values: Sequence) -> "ThetaVector":
        """Weights listed in lexicographic order of the k-subsets."""
        subsets = list(itertools.combinations(range(n + 1), k))
        if len(values) != len(subsets):
            raise MalformedTupleError(f"expected {len(subsets)} weights, got {len(values)}")
        return cls(n, k, dict(zip(subsets, values)))

    @classmethod
    def uniform(cls, n: int, k: int) -> "ThetaVector":
        subsets = list(itertools.combinations(range(n + 1), k))
        return cls(n, k, {s: Fraction(1, len(subsets)) for s in subsets})


@dataclass(frozen=True)
class AlphaTuple:
    """Vector (alpha_1, ..., alpha_{n+1}) with sum k.

    Membership in the open box (0, 1/2)^{n+1} is not enforced here; see
    :attr:`in_open_box` and :func:`xi_feasible`.
    """

    n: int
    k: int
    alphas: tuple

    def __post_init__(self):
        a = tuple(_frac(x) for x in self.alphas)
        if len(a) != self.n + 1:
            raise MalformedTupleError(f"expected {self.n + 1} alphas, got {len(a)}")
        if sum(a) != self.k:
            raise MalformedTupleError(f"alphas sum to {sum(a)}, not k={self.k}")
        object.__setattr__(self, "alphas", a)

    @property
    def in_open_box(self) -> bool:
        return all(0 < x < HALF for x in self.alphas)

    def __iter__(self):
        return iter(self.alphas)

    def __len__(self):
        return len(self.alphas)

    def __getitem__(self, i):
        return self.alphas[i]


@dataclass(frozen=True)
class MixedExponent:
    """Block mixed exponent L^{p_1}_{R^{d_1}} ... L^{p_m}_{R^{d_m}}.

    Parameters
    ----------
    groups : tuple of (int, LebesgueExponent)
        Outermost block first.
    """

    groups: tuple

    def __post_init__(self):
        g = []
        for dim, p in self.groups:
            dim = int(dim)
            if dim <= 0:
                raise MalformedTupleError(f"block dimension {dim} must be positive")
            g.append((dim, exponent(p)))
        if not g:
            raise MalformedTupleError("empty mixed exponent")
        object.__setattr__(self, "groups", tuple(g))

    @classmethod
    def per_axis(cls, ps: Sequence) -> "MixedExponent":
        return cls(tuple((1, p) for p in ps))

    @property
    def dim(self) -> int:
        return sum(d for d, _ in self.groups)

    def axis_exponents(self) -> tuple:
        """Expand to one exponent per axis, outermost axis first."""
        out = []
        for dim, p in self.groups:
            out.extend([p] * dim)
        return tuple(out)


def alpha_from_theta(theta: ThetaVector) -> AlphaTuple:
    """alpha_j is the total weight of the subsets containing slot j."""
    a = [Fraction(0)] * (theta.n + 1)
    for subset, w in theta.weights.items():
        for j in subset:
            a[j] += w
    return AlphaTuple(theta.n, theta.k, tuple(a))


def theta_for_alpha(n: int, k: int, alphas: Sequence) -> ThetaVector:
    """Decompose a point of the hypersimplex into k-subset weights.

    Any vector with entries in [0, 1] summing to k is a convex combination of
    k-subset indicators.  The construction lays the alphas end to end on
    [0, k) and reads off, for t in [0, 1), which intervals contain one of the
    points t, t+1, ..., t+k-1.  The result is exact.

    Raises
    ------
    MalformedTupleError
        If the vector is outside the hypersimplex.
    """
    a = [_frac(x) for x in alphas]
    if len(a) != n + 1 or sum(a) != k or any(not 0 <= x <= 1 for x in a):
        raise MalformedTupleError("alpha vector is not in the hypersimplex")
    if k == 0:
        return ThetaVector(n, 0, {(): 1})
    cum = [Fraction(0)]
    for x in a:
        cum.append(cum[-1] + x)
    cuts = sorted({c - (c.numerator // c.denominator) for c in cum} | {Fraction(0), Fraction(1)})
    weights: dict = {}
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi == lo:
            continue
        t = (lo + hi) / 2
        subset = []
        for j in range(n + 1):
            # smallest i with t + i >= cum[j]; the interval has length <= 1
            i = -((t - cum[j]) // 1)
            if t + i < cum[j + 1] and 0 <= i < k:
                subset.append(j)
        key = tuple(subset)
        weights[key] = weights.get(key, Fraction(0)) + (hi - lo)
    return ThetaVector(n, k, weights)


def _alpha_list(n, k, alphas) -> list:
    if isinstance(alphas, AlphaTuple):
        return list(alphas.alphas)
    a = [_frac(x) for x in alphas]
    if len(a) != n + 1:
        raise MalformedTupleError(f"expected {n + 1} alphas, got {len(a)}")
    return a


def xi_feasible(n: int, k: int, alphas, method: str = "exact") -> bool:
    """Decide whether alpha lies in the admissible interpolation set.

    Parameters
    ----------
    n, k : int
        Arity minus one and rank, with 0 <= k < (n+1)/2.
    alphas : AlphaTuple or sequence
        Candidate vector; must sum to k.
    method : {"exact", "lp"}
        ``"exact"`` uses the hypersimplex description of the image of the
        weight simplex and returns an explicit certificate internally;
        ``"lp"`` solves the feasibility problem over the weights with an exact
        rational simplex.

    Returns
    -------
    bool
    """
    _check_rank(n, k)
    a = _alpha_list(n, k, alphas)
    if sum(a) != k:
        raise MalformedTupleError(f"alphas sum to {sum(a)}, not k={k}")
    if k == 0:
        return all(x == 0 for x in a)
    if not all(0 < x < HALF for x in a):
        return False
    if method == "exact":
        theta = theta_for_alpha(n, k, a)
        return list(alpha_from_theta(theta).alphas) == a
    if method == "lp":
        return _lp_theta_exists(n, k, a)
    raise ValueError(f"unknown method {method!r}")


def _lp_theta_exists(n, k, a) -> bool:
    from sympy import Rational
    from sympy.solvers.simplex import InfeasibleLPError, linprog

    subsets = list(itertools.combinations(range(n + 1), k))
    m = len(subsets)
    A_eq = [[Rational(1)] * m]
    b_eq = [Rational(1)]
    for j in range(n + 1):
        A_eq.append([Rational(int(j in s)) for s in subsets])
        b_eq.append(Rational(a[j].numerator, a[j].denominator))
    try:
        # a redundant bound keeps the inequality block non-empty
        linprog([0] * m, [[Rational(1)] * m], [Rational(1)], A_eq, b_eq)
    except InfeasibleLPError:
        return False
    return True


@dataclass(frozen=True)
class RangeDecision:
    """Outcome of :func:`range_membership`.

    Attributes
    ----------
    member : bool
    witness : AlphaTuple or None
        An admissible alpha with 1/p_j < 1 - alpha_j for all j.
    theta : ThetaVector or None
        Interpolation weights producing ``witness``.
    slack : Fraction or None
        Largest common margin achievable in all strict inequalities.
    reason : str
    """

    member: bool
    witness: AlphaTuple | None = None
    theta: ThetaVector | None = None
    slack: Fraction | None = None
    reason: str = ""

    def __bool__(self):
        return self.member


def max_slack(n: int, k: int, t) -> Fraction:
    """Largest eps with eps <= alpha_j <= u_j - eps and sum alpha = k.

    Here u_j = min(1/2, 1 - 1/p_j).  Membership holds iff the value is
    positive.  This is the optimum of the slack LP solved in closed form.
    """
    t = _as_tuple(t)
    u = [min(HALF, 1 - r) for r in t.recips]
    m = n + 1
    return min(Fraction(k, m), (sum(u) - k) / m, min(u) / 2)


def range_membership(n: int, k: int, t, method: str = "exact") -> RangeDecision:
    """Decide membership of a tuple in the rank-k boundedness range.

    The tuple must be a Hölder tuple that is (1 - alpha)-local for some
    admissible alpha.  For k = 0 every Hölder tuple is accepted.

    Parameters
    ----------
    n, k : int
    t : ExponentTuple or sequence
        Tuple of arity n+1.
    method : {"exact", "lp"}
        ``"exact"`` maximises the common slack in closed form; ``"lp"``
        maximises it with an exact rational simplex over the weights.

    Returns
    -------
    RangeDecision
    """
    _check_rank(n, k)
    t = _as_tuple(t)
    if t.arity != n + 1:
        raise MalformedTupleError(f"tuple arity {t.arity} != n+1 = {n + 1}")
    if not is_holder_tuple(t):
        return RangeDecision(False, reason="not a Hölder tuple")
    if k == 0:
        zero = AlphaTuple(n, 0, (0,) * (n + 1))
        return RangeDecision(True, zero, ThetaVector(n, 0, {(): 1}), None,
                             "rank 0 admits every Hölder tuple")
    if method == "lp":
        return _range_lp(n, k, t)
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    eps = max_slack(n, k, t)
    if eps <= 0:
        return RangeDecision(False, slack=eps, reason="no admissible alpha with positive slack")
    u = [min(HALF, 1 - r) for r in t.recips]
    m = n + 1
    spread = sum(u) - 2 * m * eps
    lam = Fraction(0) if spread == 0 else (k - m * eps) / spread
    alphas = tuple(eps + lam * (uj - 2 * eps) for uj in u)
    witness = AlphaTuple(n, k, alphas)
    theta = theta_for_alpha(n, k, alphas)
    return RangeDecision(True, witness, theta, eps, "witness found")


def _range_lp(n, k, t) -> RangeDecision:
    from sympy import Rational
    from sympy.solvers.simplex import InfeasibleLPError, linprog

    subsets = list(itertools.combinations(range(n + 1), k))
    m = len(subsets)
    R = lambda x: Rational(x.numerator, x.denominator)  # noqa: E731
    # variables: theta_S (m of them), eps; minimise -eps
    c = [0] * m + [-1]
    A, b = [], []
    for j, r in enumerate(t.recips):
        row = [Rational(int(j in s)) for s in subsets]
        A.append(row + [1])
        b.append(R(min(HALF, 1 - r)))
        A.append([-x for x in row] + [1])
        b.append(Rational(0))
    A_eq = [[Rational(1)] * m + [0]]
    b_eq = [Rational(1)]
    try:
        opt, x = linprog(c, A, b, A_eq, b_eq)
    except InfeasibleLPError:
        return RangeDecision(False, reason="slack LP infeasible")
    # sympy may hand back plain ints for integral values
    eps = -Fraction(str(opt))
    if eps <= 0:
        return RangeDecision(False, slack=eps, reason="no admissible alpha with positive slack")
    weights = {s: Fraction(str(v)) for s, v in zip(subsets, x[:m])}
    theta = ThetaVector(n, k, weights)
    return RangeDecision(True, alpha_from_theta(theta), theta, eps, "witness found")


@dataclass(frozen=True)
class CoordinateProjection:
    """Projection of R^d onto the coordinates listed in ``retained``."""

    d: int
    retained: tuple

    def __post_init__(self):
        r = tuple(int(i) for i in self.retained)
        if len(set(r)) != len(r) or any(i < 0 or i >= self.d for i in r):
            raise UnsupportedMapError(f"invalid retained axes {r} for d={self.d}")
        object.__setattr__(self, "retained", r)

    @classmethod
    def forget(cls, d: int, axes) -> "CoordinateProjection":
        axes = {axes} if isinstance(axes, int) else set(axes)
        return cls(d, tuple(i for i in range(d) if i not in axes))

    @property
    def target_dim(self) -> int:
        return len(self.retained)

    def image_dim(self, axes: frozenset) -> int:
        """Dimension of the image of the coordinate subspace spanned by ``axes``."""
        return len(set(self.retained) & set(axes))


def _as_projection(m, d: int) -> CoordinateProjection:
    if isinstance(m, CoordinateProjection):
        if m.d != d:
            raise UnsupportedMapError(f"projection on R^{m.d} used with d={d}")
        return m
    if isinstance(m, Mapping):
        if "retained" in m:
            return CoordinateProjection(d, tuple(m["retained"]))
        if "forget" in m:
            return CoordinateProjection.forget(d, m["forget"])
        raise UnsupportedMapError(f"unknown map descriptor {m!r}")
    arr = np.asarray(m)
    if arr.ndim == 2 and arr.shape[1] == d:
        ok = np.isin(arr, (0, 1)).all() and (arr.sum(axis=1) == 1).all()
        cols = arr.argmax(axis=1)
        if ok and len(set(cols.tolist())) == len(cols):
            return CoordinateProjection(d, tuple(int(c) for c in cols))
        raise UnsupportedMapError("only coordinate-projection matrices are supported")
    if arr.ndim == 1:
        return CoordinateProjection(d, tuple(int(c) for c in arr))
    raise UnsupportedMapError(f"cannot interpret map descriptor {m!r}")


def is_brascamp_lieb_tuple(t, maps: Sequence, d: int) -> bool:
    """Check the scaling and subspace conditions for coordinate projections.

    Parameters
    ----------
    t : ExponentTuple or sequence
        Exponents p_1, ..., p_{n+1}.
    maps : sequence
        One projection per slot: :class:`CoordinateProjection`, a mapping with
        ``"retained"`` or ``"forget"`` axes, or a 0/1 selection matrix.
    d : int
        Ambient dimension, at most 6 (all 2^d coordinate subspaces are tried).

    Raises
    ------
    UnsupportedMapError
        If a map is not a coordinate projection.
    """
    t = _as_tuple(t)
    projs = [_as_projection(m, d) for m in maps]
    if len(projs) != t.arity:
        raise MalformedTupleError(f"{len(projs)} maps for {t.arity} exponents")
    if d > 6:
        raise ValueError("exhaustive subspace check limited to d <= 6")
    r = t.recips
    if any(not 0 <= x < 1 for x in r[:-1]):
        return False
    if sum(P.target_dim * x for P, x in zip(projs, r)) != d:
        return False
    for size in range(1, d + 1):
        for axes in itertools.combinations(range(d), size):
            rhs = sum(P.image_dim(frozenset(axes)) * x for P, x in zip(projs, r))
            if size > rhs:
                return False
    return True


def finner_condition(maps: Sequence, tuples: Sequence, d: int | None = None,
                     target=1) -> bool:
    """Per-axis Hölder condition for functions that depend on axis subsets.

    Parameters
    ----------
    maps : sequence
        Retained-axis descriptors, one per function (see
        :func:`is_brascamp_lieb_tuple`).
    tuples : sequence of MixedExponent or sequences of exponents
        Exponents on the retained axes, in the order of ``retained``.
    d : int, optional
        Ambient dimension; inferred from the largest axis index otherwise.
    target : rational, default 1
        Required reciprocal sum on every axis (1/p for an L^p target).
    """
    if d is None:
        d = 1 + max(max(_retained(m)) for m in maps)
    projs = [_as_projection(m, d) for m in maps]
    target = _frac(target)
    sums = [Fraction(0)] * d
    for P, tup in zip(projs, tuples):
        axis_exps = tup.axis_exponents() if isinstance(tup, MixedExponent) else tuple(exponent(p) for p in tup)
        if len(axis_exps) != P.target_dim:
            raise MalformedTupleError(f"{len(axis_exps)} exponents for {P.target_dim} retained axes")
        for ax, e in zip(P.retained, axis_exps):
            sums[ax] += e.recip
    return all(s == target for s in sums)


def finner_failing_axis(maps: Sequence, tuples: Sequence, d: int | None = None, target=1):
    """First axis (0-based) whose reciprocal sum misses ``target``, or None."""
    if d is None:
        d = 1 + max(max(_retained(m)) for m in maps)
    projs = [_as_projection(m, d) for m in maps]
    target = _frac(target)
    sums = [Fraction(0)] * d
    for P, tup in zip(projs, tuples):
        axis_exps = tup.axis_exponents() if isinstance(tup, MixedExponent) else tuple(exponent(p) for p in tup)
        if len(axis_exps) != P.target_dim:
            raise MalformedTupleError(f"{len(axis_exps)} exponents for {P.target_dim} retained axes")
        for ax, e in zip(P.retained, axis_exps):
            sums[ax] += e.recip
    for ax, s in enumerate(sums):
        if s != target:
            return ax
    return None


def _retained(m):
    if isinstance(m, CoordinateProjection):
        return m.retained
    if isinstance(m, Mapping) and "retained" in m:
        return tuple(m["retained"])
    raise MalformedTupleError("pass d explicitly for this map descriptor")


def _p_string(e: LebesgueExponent) -> str:
    if e.recip == 0:
        return "inf"
    p = 1 / e.recip
    return f"{p.numerator}/{p.denominator}"


def tuple_to_json(t) -> str:
    """Serialise as a JSON array of ``"num/den"`` or ``"inf"`` strings."""
    t = _as_tuple(t)
    return json.dumps([_p_string(e) for e in t])


def tuple_from_json(s: str) -> ExponentTuple:
    return exponent_tuple(*json.loads(s))


def scan_to_csv(rows: Iterable) -> str:
    """Render (tuple, RangeDecision) pairs with columns tuple, member, witness."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tuple", "member", "witness_alphas"])
    for t, dec in rows:
        wit = "" if dec.witness is None else json.dumps([str(a) for a in dec.witness.alphas])
        w.writerow([tuple_to_json(t), int(dec.member), wit])
    return buf.getvalue()
