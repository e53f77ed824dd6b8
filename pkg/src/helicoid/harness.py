"""Experiment driver and command line interface.

Each experiment is compiled into a :class:`Plan`: a list of task keys, a
pure ``trial(key) -> row`` function and a verdict function over all rows.
Trials depend only on (config, key), so reports are identical for any
thread count and a single row can be re-derived from the config alone.

Usage::

    helicoid <experiment> --config cfg.json [--seed N] [--threads T]
             [--out PATH] [--format csv|json]

Exit status is 0 when every verdict passes, 2 when one fails and 1 on a
usage or configuration error.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from . import decomp, dyadic, exponents, gridfn, maximal, model, sparse
from .dyadic import DyadicCube
from .errors import ConfigError, DivergenceError, HelicoidError
from .gridfn import GridFunction, NormSpec, bandlimited_field, mixed_norm, random_dyadic_indicator

__all__ = [
    "ExperimentConfig",
    "Report",
    "Plan",
    "EXPERIMENTS",
    "build_plan",
    "run",
    "rederive",
    "run_local_estimate",
    "run_tree_estimate",
    "run_decomposition",
    "run_loomis_whitney",
    "run_mixed_norm_scan",
    "run_maximal_suite",
    "run_sparse_suite",
    "run_endpoint",
    "run_range_scan",
    "main",
]

MAX_SAMPLES = 1 << 24
MAX_TILES = 10_000

# rank-k Whitney matrices and (scales, box) used when a config gives none
DEFAULT_COLLECTIONS = {
    (2, 1, 1): ([[1, -1]], [0, 7], 64),
    (2, 0, 1): ([[1, 1], [1, -1]], [0, 7], 64),
    (2, 1, 2): ([[1, 0, -1, 0], [0, 1, 0, -1]], [0, 3], 8),
}

DEFAULT_J = {"maximal_suite": 6, "loomis_whitney": None, "decomposition": 9}

# the decomposition study starts from the ~300-tile collection and doubles it
DECOMPOSITION_BASE = {(2, 1, 1): ([0, 8], 128)}

# (tolerance, mode) of the two-resolution verdicts
STABILITY = {
    "local_estimate": (0.2, "two_sided"),
    "tree_estimate": (0.2, "two_sided"),
    "decomposition": (0.2, "two_sided"),
    "loomis_whitney": (0.2, "two_sided"),
    "maximal_suite": (0.1, "growth"),
    "sparse_suite": (0.1, "growth"),
    "mixed_norm_scan": (0.2, "growth"),
}

_KEYS = {"experiment", "d", "n", "k", "J", "alpha", "s", "q", "seeds", "weight", "M",
         "tolerance", "params", "output"}


def _parse_exp(p, what: str):
    try:
        return exponents.exponent(p)
    except (ValueError, ZeroDivisionError, TypeError, HelicoidError) as exc:
        raise ConfigError(f"{what}: cannot parse exponent {p!r}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated experiment parameters.

    Exponents are kept as strings (``"inf"``, ``"3/2"``) so the canonical
    JSON form, and hence the hash, does not depend on float formatting.
    """

    experiment: str
    d: int = 1
    n: int = 2
    k: int = 1
    J: int = 8
    alpha: tuple | None = None
    s: tuple | None = None
    q: str | None = None
    seeds: int = 10
    base_seed: int = 0
    weight: str = "chi_tilde"
    M: int = gridfn.M_DEFAULT
    tolerance: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: str | None = None

    @classmethod
    def from_dict(cls, obj: dict, experiment: str | None = None) -> "ExperimentConfig":
        if not isinstance(obj, dict):
            raise ConfigError("config must be a JSON object")
        unknown = set(obj) - _KEYS
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        exp = obj.get("experiment", experiment)
        if experiment is not None and exp != experiment:
            raise ConfigError(f"config is for {exp!r}, command asked for {experiment!r}")
        if exp not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {exp!r}; choose from {sorted(EXPERIMENTS)}")
        seeds = obj.get("seeds", 10)
        if isinstance(seeds, dict):
            count, base = seeds.get("count", 10), seeds.get("base", 0)
        else:
            count, base = seeds, 0
        try:
            kw = dict(
                experiment=exp,
                d=int(obj.get("d", 1)),
                n=int(obj.get("n", 2)),
                k=int(obj.get("k", 1)),
                J=int(obj["J"]) if obj.get("J") is not None else DEFAULT_J.get(exp, 8),
                seeds=int(count),
                base_seed=int(base),
                weight=str(obj.get("weight", "chi_tilde")),
                M=int(obj.get("M", gridfn.M_DEFAULT)),
                tolerance=dict(obj.get("tolerance", {})),
                params=dict(obj.get("params", {})),
                output=obj.get("output"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed config field: {exc}") from exc
        if obj.get("alpha") is not None:
            try:
                kw["alpha"] = tuple(str(exponents._frac(a)) for a in obj["alpha"])
            except (ValueError, ZeroDivisionError, TypeError) as exc:
                raise ConfigError(f"alpha: {exc}") from exc
        if obj.get("s") is not None:
            kw["s"] = tuple(str(_parse_exp(e, "s")) for e in obj["s"])
        if obj.get("q") is not None:
            kw["q"] = str(_parse_exp(obj["q"], "q"))
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def with_seed(self, base: int) -> "ExperimentConfig":
        return ExperimentConfig(**{**self.__dict__, "base_seed": int(base)})

    def to_dict(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k != "base_seed"}
        out["seeds"] = {"count": self.seeds, "base": self.base_seed}
        out["alpha"] = list(self.alpha) if self.alpha is not None else None
        out["s"] = list(self.s) if self.s is not None else None
        return out

    @property
    def hash(self) -> str:
        """Hash of every field that influences results (not the output path)."""
        d = self.to_dict()
        d.pop("output")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def tol(self, name: str, default):
        return self.tolerance.get(name, default)

    def validate(self) -> None:
        if self.d < 1 or self.n < 1 or self.J is not None and self.J < 1:
            raise ConfigError("d, n and J must be positive")
        if not 0 <= self.k or 2 * self.k >= self.n + 1:
            raise ConfigError(f"rank k={self.k} violates 0 <= k < (n+1)/2 for n={self.n}")
        if self.seeds < 0:
            raise ConfigError("seed count must be nonnegative")
        if self.weight not in ("indicator", "chi_tilde"):
            raise ConfigError("weight must be 'indicator' or 'chi_tilde'")
        if self.M < 1:
            raise ConfigError("M must be positive")
        if self.alpha is not None:
            if len(self.alpha) != self.n + 1:
                raise ConfigError(f"alpha needs {self.n + 1} entries")
            try:
                ok = exponents.xi_feasible(self.n, self.k, self.alpha)
            except HelicoidError as exc:
                raise ConfigError(f"alpha rejected: {exc}") from exc
            if not ok:
                raise ConfigError(f"alpha {list(self.alpha)} is not admissible for n={self.n}, k={self.k}")
        elif self.experiment == "local_estimate":
            raise ConfigError("local_estimate needs alpha")


def _check_grid(d: int, J: int, nw: int = 1) -> None:
    if (1 << J) ** d * nw > MAX_SAMPLES:
        raise ConfigError(f"grid 2^{J} in d={d} with |W|={nw} exceeds {MAX_SAMPLES} samples")


# ---------------------------------------------------------------------------
# reports

@dataclass
class Report:
    """Rows, verdicts and summary statistics of one run."""

    experiment: str
    config_hash: str
    rows: list
    verdicts: dict
    summary: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_json(self) -> str:
        return json.dumps({"experiment": self.experiment, "config_hash": self.config_hash,
                           "verdicts": self.verdicts, "summary": self.summary, "rows": self.rows},
                          indent=1, default=_json_default)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# experiment={self.experiment} config_hash={self.config_hash}\n")
        for name, ok in self.verdicts.items():
            buf.write(f"# verdict {name}={'PASS' if ok else 'FAIL'}\n")
        cols = []
        for r in self.rows:
            cols.extend(c for c in r if c not in cols)
        if cols:
            w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _csv_cell(v) for k, v in r.items()})
        return buf.getvalue()


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, Fraction):
        return str(o)
    return str(o)


def _csv_cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return v


@dataclass
class Plan:
    """Compiled experiment: task keys, a pure trial and a verdict function."""

    cfg: ExperimentConfig
    tasks: list
    trial: Callable
    verdict: Callable
    prepare: Callable | None = None


def _execute(plan: Plan, threads: int | None = None) -> Report:
    cfg = plan.cfg
    if plan.prepare is not None and plan.tasks:
        plan.prepare()
    threads = threads or os.cpu_count() or 1
    if threads <= 1 or len(plan.tasks) <= 1:
        rows = [plan.trial(key) for key in plan.tasks]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(plan.trial, plan.tasks))
    out = []
    for key, row in zip(plan.tasks, rows):
        out.append({"config_hash": cfg.hash, **key, **row})
    verdicts, summary = plan.verdict(out) if out else ({}, {})
    return Report(cfg.experiment, cfg.hash, out, verdicts, summary)


def build_plan(cfg: ExperimentConfig) -> Plan:
    return EXPERIMENTS[cfg.experiment](cfg)


def run(cfg: ExperimentConfig, threads: int | None = None) -> Report:
    """Run the configured experiment."""
    return _execute(build_plan(cfg), threads)


def rederive(cfg: ExperimentConfig, row: dict) -> dict:
    """Recompute a report row from the config alone and return it.

    Raises
    ------
    ConfigError
        If the row was produced by a different config.
    """
    if row.get("config_hash") != cfg.hash:
        raise ConfigError("row hash does not match the config")
    plan = build_plan(cfg)
    key = next((k for k in plan.tasks if all(row.get(c) == v for c, v in k.items())), None)
    if key is None:
        raise ConfigError("row key is not part of this config's task list")
    if plan.prepare is not None:
        plan.prepare()
    return {"config_hash": cfg.hash, **key, **plan.trial(key)}


# ---------------------------------------------------------------------------
# shared helpers

def _rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(stream)])


def _seed_keys(cfg: ExperimentConfig, resolutions, **extra) -> list:
    return [{"seed": cfg.base_seed + i, "J": J, **extra}
            for J in resolutions for i in range(cfg.seeds)]


def _collection(cfg: ExperimentConfig, spec: dict | None = None, J: int | None = None):
    spec = dict(cfg.params.get("collection", {}) if spec is None else spec)
    key = (cfg.n, cfg.k, cfg.d)
    if "A" in spec:
        A = spec["A"]
        lo, hi = spec.get("scales", [0, 4])
        box = spec.get("box", 16)
    elif key in DEFAULT_COLLECTIONS:
        A, (lo, hi), box = DEFAULT_COLLECTIONS[key]
        lo, hi = spec.get("scales", [lo, hi])
        box = spec.get("box", box)
    else:
        raise ConfigError(f"no default Whitney matrix for (n, k, d) = {key}; give params.collection.A")
    J = cfg.J if J is None else J
    if hi - 1 > J:
        raise ConfigError(f"scales up to {hi - 1} need J >= {hi - 1}")
    if 2 * box > (1 << J):
        raise ConfigError(f"frequency box {box} exceeds the Nyquist range of J={J}")
    try:
        S = dyadic.whitney_collection(A, cfg.d, range(int(lo), int(hi)), int(box))
    except HelicoidError as exc:
        raise ConfigError(f"collection rejected: {exc}") from exc
    if (S.n, S.k) != (cfg.n, cfg.k):
        raise ConfigError(f"matrix A gives (n, k) = ({S.n}, {S.k}), config says ({cfg.n}, {cfg.k})")
    if len(S) > MAX_TILES:
        raise ConfigError(f"{len(S)} tiles exceed the cap of {MAX_TILES}")
    return S


def _test_function(d: int, J: int, rng, seed: int, cutoff: int, level: int, density=None,
                   weights=(), real=True) -> GridFunction:
    """Band-limited field on odd seeds, random dyadic indicator on even seeds."""
    if seed % 2:
        return bandlimited_field(d, J, cutoff, rng, real=real, weights=weights)
    dens = rng.uniform(0.2, 0.8) if density is None else density
    if not weights:
        return random_dyadic_indicator(d, J, level, dens, rng)
    comps = [random_dyadic_indicator(d, J, level, dens, rng).samples
             for _ in range(int(np.prod([np.size(w) for w in weights])))]
    shape = (1 << J,) * d + tuple(np.size(w) for w in weights)
    return GridFunction(d, J, np.stack(comps, axis=-1).reshape(shape), weights)


def _stability(rows, key: str, resolutions, tol: float, mode: str, **where):
    sel = [r for r in rows if all(r.get(c) == v for c, v in where.items())]
    a = max((r[key] for r in sel if r["J"] == resolutions[0]), default=0.0)
    b = max((r[key] for r in sel if r["J"] == resolutions[1]), default=0.0)
    finite = math.isfinite(a) and math.isfinite(b)
    if mode == "two_sided":
        ok = abs(b - a) <= tol * a if a > 0 else b == 0
    else:
        ok = b <= (1 + tol) * a if a > 0 else b == 0
    change = (b / a - 1) if a > 0 else 0.0
    return finite and ok, {f"max@J={resolutions[0]}": a, f"max@J={resolutions[1]}": b,
                           "relative_change": change}


def _stability_verdict(cfg, rows, key, resolutions, **where):
    tol, mode = STABILITY[cfg.experiment]
    tol = cfg.tol("stability", tol)
    ok, summ = _stability(rows, key, resolutions, tol, mode, **where)
    finite = all(math.isfinite(r[key]) for r in rows)
    return finite, ok, summ


# ---------------------------------------------------------------------------
# experiments

def _operators(cfg, S, resolutions):
    ops = {J: model.ModelOperator(S, J) for J in resolutions}

    def prepare():
        for T in ops.values():
            for slot in range(S.n + 1):
                T.matrix(slot)
    return ops, prepare


def _plan_local_estimate(cfg: ExperimentConfig) -> Plan:
    res = (cfg.J, cfg.J + 1)
    _check_grid(cfg.d, res[1])
    S = _collection(cfg)
    ops, prepare = _operators(cfg, S, res)
    level = int(cfg.params.get("level", min(5, cfg.J)))
    depth = int(cfg.params.get("r0_levels", 3))

    def trial(key):
        seed, J = key["seed"], key["J"]
        rng = _rng(seed)
        Es = [random_dyadic_indicator(cfg.d, J, level, rng.uniform(0.2, 0.8), rng)
              for _ in range(cfg.n + 1)]
        r = int(rng.integers(0, depth))
        R0 = DyadicCube(cfg.d, -r, tuple(int(c) for c in rng.integers(0, 1 << r, size=cfg.d)))
        ratio = decomp.local_estimate_ratio(ops[J], R0, Es, cfg.alpha, cfg.M)
        return {"R0_scale": R0.scale, "R0_corner": list(R0.corner), "ratio": ratio}

    def verdict(rows):
        finite, stable, summ = _stability_verdict(cfg, rows, "ratio", res)
        return {"finite": finite, "two_resolution_stable": stable}, summ

    return Plan(cfg, _seed_keys(cfg, res), trial, verdict, prepare)


def _plan_tree_estimate(cfg: ExperimentConfig) -> Plan:
    res = (cfg.J, cfg.J + 1)
    _check_grid(cfg.d, res[1])
    S = _collection(cfg)
    ops, prep_ops = _operators(cfg, S, res)
    kind = cfg.params.get("kind", "lacunary")
    cutoff = int(cfg.params.get("cutoff", (1 << cfg.J) // 4))
    level = int(cfg.params.get("level", min(6, cfg.J)))
    trees = {}

    def prepare():
        prep_ops()
        for j in range(1, cfg.n + 2):
            trees[j] = dyadic.find_trees(S, j, kind)

    def trial(key):
        seed, J = key["seed"], key["J"]
        rng = _rng(seed)
        j = int(rng.integers(1, cfg.n + 2))
        tree = trees[j][int(rng.integers(len(trees[j])))]
        fs = [_test_function(cfg.d, J, rng, seed, cutoff, level) for _ in range(cfg.n + 1)]
        lam, bound, ratio = model.tree_form_ratio(ops[J], tree, fs)
        return {"slot": j, "tree_size": len(tree), "form": lam, "bound": bound, "ratio": ratio}

    def verdict(rows):
        finite, stable, summ = _stability_verdict(cfg, rows, "ratio", res)
        return {"finite": finite, "two_resolution_stable": stable}, summ

    return Plan(cfg, _seed_keys(cfg, res), trial, verdict, prepare)


def _plan_decomposition(cfg: ExperimentConfig) -> Plan:
    _check_grid(cfg.d, cfg.J)
    spec = dict(cfg.params.get("collection", {}))
    key = (cfg.n, cfg.k, cfg.d)
    if "A" not in spec and key in DECOMPOSITION_BASE:
        sc, bx = DECOMPOSITION_BASE[key]
        spec = {"scales": sc, "box": bx, **spec}
    lo, hi = spec.get("scales", DEFAULT_COLLECTIONS.get(key, (None, [0, 4]))[1])
    box = spec.get("box", DEFAULT_COLLECTIONS.get(key, (None, None, 16))[2])
    spec = {**spec, "scales": [lo, hi], "box": box}
    base = _collection(cfg, spec)
    # doubling: one more frequency scale and twice the frequency box
    doubled = _collection(cfg, {**spec, "scales": [lo, hi + 1], "box": 2 * box})
    ops = {"base": model.ModelOperator(base, cfg.J), "doubled": model.ModelOperator(doubled, cfg.J)}
    cutoff = int(cfg.params.get("cutoff", min(64, box, (1 << cfg.J) // 4)))
    level = int(cfg.params.get("level", min(6, cfg.J)))
    factor = float(cfg.params.get("lambda_factor", 1.0))
    if factor < 1.0:
        raise ConfigError("lambda_factor must be >= 1 so that size <= lambda")

    def prepare():
        for T in ops.values():
            for slot in range(cfg.n + 1):
                T.matrix(slot)

    def trial(key):
        seed, variant = key["seed"], key["variant"]
        T = ops[variant]
        rng = _rng(seed)
        j = int(rng.integers(1, cfg.n + 2))
        f = _test_function(cfg.d, cfg.J, rng, seed, cutoff, level)
        lam = decomp.size(T, f, j) * factor
        if lam == 0.0:
            return {"slot": j, "lambda": 0.0, "size_after": 0.0, "postcondition": True,
                    "partition": True, "trees": 0, "energy": 0.0, "energy_ratio": 0.0}
        D = decomp.decompose(T, f, j, lam, None, None, cfg.M)
        members = [D.remaining] + [t.members for t in D.forest.trees]
        allm = np.concatenate(members) if members else np.zeros(0, np.int64)
        partition = allm.size == len(T.collection) and np.unique(allm).size == allm.size
        return {"slot": j, "lambda": lam, "size_after": D.size_after,
                "postcondition": bool(D.size_after <= lam / 2), "partition": bool(partition),
                "trees": len(D.forest.trees), "energy": D.forest.energy,
                "energy_ratio": D.forest.energy_ratio}

    def verdict(rows):
        tol, _ = STABILITY["decomposition"]
        tol = cfg.tol("stability", tol)
        a = max(r["energy_ratio"] for r in rows if r["variant"] == "base")
        b = max(r["energy_ratio"] for r in rows if r["variant"] == "doubled")
        stable = math.isfinite(a) and math.isfinite(b) and (abs(b - a) <= tol * a if a > 0 else b == 0)
        return ({"postcondition": all(r["postcondition"] for r in rows),
                 "partition": all(r["partition"] for r in rows),
                 "energy_constant_stable": stable},
                {"max_energy_ratio_base": a, "max_energy_ratio_doubled": b,
                 "relative_change": (b / a - 1) if a > 0 else 0.0,
                 "tiles_base": len(base), "tiles_doubled": len(doubled)})

    tasks = [{"seed": cfg.base_seed + i, "variant": v}
             for v in ("base", "doubled") for i in range(cfg.seeds)]
    return Plan(cfg, tasks, trial, verdict, prepare)


def _lw_pattern(name: str, p, d: int):
    """Maps and per-axis exponents of the standard degenerate patterns."""
    p = Fraction(exponents._frac(p))
    if name == "H1":
        return [{"forget": [j]} for j in range(d)], [[str(3 * p)] * (d - 1) for _ in range(d)]
    if name == "H2":
        if d != 4:
            raise ConfigError("pattern H2 is defined for d = 4")
        two, inf = str(2 * p), "inf"
        return ([{"forget": [j]} for j in range(4)],
                [[two, two, inf], [inf, two, two], [two, inf, two], [two, two, inf]])
    raise ConfigError(f"unknown pattern {name!r}")


def _plan_loomis_whitney(cfg: ExperimentConfig) -> Plan:
    mode = cfg.params.get("mode", "product")
    d = cfg.d
    if mode == "product":
        d = int(cfg.params.get("d", cfg.d if cfg.d > 1 else 4))
        J = cfg.J or 4
    elif mode == "model":
        J = cfg.J or 5
    else:
        raise ConfigError(f"mode must be 'product' or 'model', got {mode!r}")
    p = exponents._frac(cfg.params.get("p", 1 if mode == "product" else 2))
    if "maps" in cfg.params:
        maps, tuples = cfg.params["maps"], cfg.params["tuples"]
    elif mode == "product":
        maps, tuples = _lw_pattern(cfg.params.get("pattern", "H1"), p, d)
    else:
        maps = [{"forget": [0]}, {"forget": [1]}]
        tuples = [[str(p)], [str(p)]]
    try:
        projs = [exponents._as_projection(m, d) for m in maps]
        axis = exponents.finner_failing_axis(projs, tuples, d, target=1 / p)
    except HelicoidError as exc:
        raise ConfigError(f"projection data rejected: {exc}") from exc
    if axis is not None:
        raise ConfigError(f"exponents fail the per-axis Hölder condition on axis {axis}")
    tuples = [[_parse_exp(e, "tuples") for e in t] for t in tuples]
    level = int(cfg.params.get("level", 3))
    cutoff = int(cfg.params.get("cutoff", 4))
    zero_slot = cfg.params.get("zero_slot")

    def inputs(seed, J):
        rng = _rng(seed)
        fs = []
        for P in projs:
            f = _test_function(P.target_dim, J, rng, seed, min(cutoff, 1 << (J - 1)), min(level, J))
            fs.append(abs(f) if mode == "product" else f)
        if zero_slot is not None:
            fs[int(zero_slot)] = GridFunction(fs[0].d, J, np.zeros_like(fs[int(zero_slot)].samples))
        return fs

    def rhs(fs):
        out = 1.0
        for f, t in zip(fs, tuples):
            out *= mixed_norm(f, NormSpec(t))
        return out

    if mode == "product":
        _check_grid(d, J)
        res = (J,)

        def trial(key):
            fs = inputs(key["seed"], key["J"])
            prod = None
            for f, P in zip(fs, projs):
                g = maximal.lift(f, P).samples
                prod = g if prod is None else prod * g
            lhs = mixed_norm(GridFunction(d, key["J"], prod), NormSpec.uniform(d, p))
            r = rhs(fs)
            return {"lhs": lhs, "rhs": r, "ratio": lhs / r if r > 0 else 0.0}

        def verdict(rows):
            tol = cfg.tol("product_bound", 1e-6)
            mx = max(r["ratio"] for r in rows)
            return {"constant_one": mx <= 1 + tol}, {"max_ratio": mx}

        return Plan(cfg, _seed_keys(cfg, res), trial, verdict)

    if cfg.d != 2 and "collection" not in cfg.params:
        raise ConfigError("model mode uses the d = 2 default collection; set d = 2")
    res = (J, J + 1)
    _check_grid(cfg.d, res[1])
    cfg2 = ExperimentConfig(**{**cfg.__dict__, "J": J})
    S = _collection(cfg2)
    ops, prepare = _operators(cfg2, S, res)
    if len(projs) != S.n:
        raise ConfigError(f"model mode needs {S.n} maps, got {len(projs)}")

    def trial(key):
        J = key["J"]
        fs = inputs(key["seed"], J)
        out = ops[J].apply([maximal.lift(f, P) for f, P in zip(fs, projs)])
        lhs = mixed_norm(out, NormSpec.uniform(cfg.d, p))
        r = rhs(fs)
        return {"lhs": lhs, "rhs": r, "ratio": lhs / r if r > 0 else 0.0}

    def verdict(rows):
        finite, stable, summ = _stability_verdict(cfg, rows, "ratio", res)
        return {"finite": finite, "two_resolution_stable": stable}, summ

    return Plan(cfg, _seed_keys(cfg, res), trial, verdict, prepare)


def _in_range(n: int, k: int, ins, out) -> bool:
    """Componentwise range membership of input exponents and an output exponent."""
    recips = [e.recip for e in ins] + [1 - out.recip]
    t = exponents.ExponentTuple(tuple(exponents.LebesgueExponent(r) for r in recips))
    try:
        return bool(exponents.range_membership(n, k, t))
    except HelicoidError:
        return False


def _plan_mixed_norm_scan(cfg: ExperimentConfig) -> Plan:
    res = (cfg.J, cfg.J + 1)
    W = int(cfg.params.get("W", 1))
    _check_grid(cfg.d, res[1], W)
    S = _collection(cfg)
    ops, prepare = _operators(cfg, S, res)
    n, d = cfg.n, cfg.d
    tuples = cfg.params.get("tuples", [[2] * d] * n)
    output = cfg.params.get("output", [1] * d)
    if len(tuples) != n or any(len(t) != d for t in tuples) or len(output) != d:
        raise ConfigError(f"need {n} input tuples and one output tuple, each with {d} axes")
    ins = [[_parse_exp(e, "tuples") for e in t] for t in tuples]
    outs = [_parse_exp(e, "output") for e in output]
    vec = cfg.params.get("vector")
    weights = ()
    if W > 1 or vec is not None:
        if vec is None or len(vec) != n + 1:
            raise ConfigError("vector needs one exponent per input plus the output")
        weights = (np.full(W, 1.0 / W),)
        vec = [_parse_exp(e, "vector") for e in vec]
    proved = all(_in_range(n, cfg.k, [t[a] for t in ins], outs[a]) for a in range(d))
    if vec is not None:
        proved = proved and _in_range(n, cfg.k, vec[:-1], vec[-1])
    tag = "proved-range" if proved else "outside-proved-range"
    cutoff = int(cfg.params.get("cutoff", (1 << cfg.J) // 4))
    level = int(cfg.params.get("level", min(5, cfg.J)))

    def trial(key):
        J = key["J"]
        rng = _rng(key["seed"])
        fs = [_test_function(d, J, rng, key["seed"], cutoff, level, weights=weights) for _ in range(n)]
        out = ops[J].apply(fs)
        vout = (vec[-1],) if weights else ()
        lhs = mixed_norm(out, NormSpec(outs, vout))
        r = 1.0
        for i, (f, t) in enumerate(zip(fs, ins)):
            r *= mixed_norm(f, NormSpec(t, (vec[i],) if weights else ()))
        return {"range": tag, "ratio": lhs / r if r > 0 else 0.0}

    def verdict(rows):
        finite, stable, summ = _stability_verdict(cfg, rows, "ratio", res)
        summ["range"] = tag
        return {"finite": finite, "no_growth_under_refinement": stable}, summ

    return Plan(cfg, _seed_keys(cfg, res), trial, verdict, prepare)


def _plan_maximal_suite(cfg: ExperimentConfig) -> Plan:
    res = (cfg.J, cfg.J + 1)
    d = cfg.d if cfg.d > 1 else 2
    P = cfg.params.get("P", [["inf", 2], [2, "inf"]])
    R = cfg.params.get("R", [4, 4])
    W = int(cfg.params.get("W", 4))
    _check_grid(d, res[1], W)
    n = len(P)
    s = cfg.s or tuple("1" for _ in range(n))
    if len(s) != n or len(R) != n or any(len(p) != d for p in P):
        raise ConfigError(f"need {n} spatial tuples of length {d}, {n} vector exponents and {n} s values")
    Ps = [[_parse_exp(e, "P") for e in p] for p in P]
    Rs = [_parse_exp(e, "R") for e in R]
    Pout = [exponents.LebesgueExponent(sum(p[a].recip for p in Ps)) for a in range(d)]
    Rout = exponents.LebesgueExponent(sum(r.recip for r in Rs))
    weights = (np.full(W, 1.0 / W),)
    weight = cfg.params.get("maximal_weight", "indicator")
    cutoff = int(cfg.params.get("cutoff", (1 << cfg.J) // 4))
    level = int(cfg.params.get("level", min(4, cfg.J)))

    def trial(key):
        J, seed = key["J"], key["seed"]
        rng = _rng(seed)
        fs = [abs(_test_function(d, J, rng, seed, cutoff, level, density=0.4, weights=weights))
              for _ in range(n)]
        fam = maximal.DyadicFamily.full(d, J)
        Mf = maximal.multi_maximal(fs, s, fam, weight, cfg.M)
        prod = None
        for f, e in zip(fs, s):
            m1 = maximal.multi_maximal([f], [e], fam, weight, cfg.M).samples
            prod = m1 if prod is None else prod * m1
        kap = maximal.StoppingTime.argmax(fs, s, fam, weight, cfg.M)
        lin = maximal.linearized_maximal(fs, s, kap, None, weight, cfg.M)
        lhs = mixed_norm(Mf, NormSpec(Pout, (Rout,)))
        r = 1.0
        for f, p, rr in zip(fs, Ps, Rs):
            r *= mixed_norm(f, NormSpec(p, (rr,)))
        return {"product_bound": bool((Mf.samples <= prod).all()),
                "argmax_exact": bool(np.array_equal(lin.samples, Mf.samples)),
                "ratio": lhs / r if r > 0 else 0.0}

    def verdict(rows):
        finite, stable, summ = _stability_verdict(cfg, rows, "ratio", res)
        return {"pointwise_product_bound": all(r["product_bound"] for r in rows),
                "argmax_linearization_exact": all(r["argmax_exact"] for r in rows),
                "finite": finite, "no_growth_under_refinement": stable}, summ

    return Plan(cfg, _seed_keys(cfg, res), trial, verdict)


def _plan_sparse_suite(cfg: ExperimentConfig) -> Plan:
    res = (cfg.J, cfg.J + 1)
    _check_grid(cfg.d, res[1])
    S = _collection(cfg)
    ops, prepare = _operators(cfg, S, res)
    n, d = cfg.n, cfg.d
    s = cfg.s or tuple("2" for _ in range(n + 1))
    if len(s) != n + 1:
        raise ConfigError(f"s needs {n + 1} entries (inputs and v)")
    q = cfg.q or "1"
    C = cfg.params.get("C")
    eta = Fraction(cfg.params.get("eta", "1/2"))
    v_kind = cfg.params.get("v", "indicator")
    if v_kind not in ("indicator", "one"):
        raise ConfigError("params.v must be 'indicator' or 'one'")
    cutoff = int(cfg.params.get("cutoff", (1 << cfg.J) // 4))
    level = int(cfg.params.get("level", min(5, cfg.J)))
    weight = cfg.params.get("sparse_weight", "indicator")
    top = DyadicCube(d, 0, (0,) * d)

    def trial(key):
        J, seed = key["J"], key["seed"]
        rng = _rng(seed)
        fs = [_test_function(d, J, rng, seed, cutoff, level, density=0.5) for _ in range(n)]
        if v_kind == "one":
            v = GridFunction.constant(d, J, 1.0)
        else:
            v = random_dyadic_indicator(d, J, min(3, J), 0.6, rng)
        g = ops[J].apply(fs)
        c = sparse.build_sparse(fs, s, q, v, top, C, eta)
        check = sparse.verify_sparse(c)
        packing = sparse.carleson_packing(c)
        return {"cubes": len(c), "generations": len(c.generations), "verified": bool(check),
                "packing": float(packing), "packing_ok": packing <= 1 / eta,
                "generations_ok": len(c.generations) <= J * (n + 1),
                "ratio": sparse.sparse_domination_ratio(g, c, fs, s, q, v, weight)}

    def verdict(rows):
        finite, stable, summ = _stability_verdict(cfg, rows, "ratio", res)
        return {"sparse_verified": all(r["verified"] for r in rows),
                "carleson_packing": all(r["packing_ok"] for r in rows),
                "generation_bound": all(r["generations_ok"] for r in rows),
                "finite": finite, "no_growth_under_refinement": stable}, summ

    return Plan(cfg, _seed_keys(cfg, res), trial, verdict, prepare)


def _plan_endpoint(cfg: ExperimentConfig) -> Plan:
    q = float(exponents.exponent(cfg.q or "1/2").p)
    s = [float(exponents.exponent(e).p) for e in (cfg.s or ("2", "2"))]
    if len(s) != 2:
        raise ConfigError("endpoint sum takes two exponents s")
    A_vals = [float(exponents._frac(a)) for a in cfg.params.get("A", ["1/256", "1/8", 1, 8, 256])]
    S0_vals = [float(exponents._frac(a)) for a in cfg.params.get("S0", ["1/8", "1/2", 1])]
    hw = int(cfg.params.get("half_width", 30))
    # by default probe the threshold q = (1/s1 + 1/s2)^{-1}, where the sum first diverges
    div_q = cfg.params.get("divergence_q", s[0] * s[1] / (s[0] + s[1]))
    try:
        C = maximal.endpoint_constant(q, *s)
    except DivergenceError as exc:
        raise ConfigError(f"q={q} lies in the divergent regime: {exc}") from exc
    tasks = []
    if cfg.seeds > 0:
        tasks = [{"A1": a1, "A2": a2, "A3": a3, "S0": s0}
                 for a1 in A_vals for a2 in A_vals for a3 in A_vals for s0 in S0_vals]

    def trial(key):
        r = maximal.weak_type_sum(q, s, (key["A1"], key["A2"], key["A3"]), key["S0"], hw)
        return {"value": r.value, "tail": r.tail, "bound": r.bound, "constant": C,
                "ratio": r.ratio, "ok": r.ok}

    def verdict(rows):
        out = {"single_constant_bound": all(r["ok"] for r in rows)}
        summ = {"constant": C, "max_ratio": max(r["ratio"] for r in rows)}
        if div_q is not None:
            try:
                maximal.weak_type_sum(float(div_q) if isinstance(div_q, float) else float(exponents._frac(div_q)),
                                      s, (1, 1, 1), 1.0, hw)
                out["divergence_detected"] = False
            except DivergenceError:
                out["divergence_detected"] = True
        return out, summ

    return Plan(cfg, tasks, trial, verdict)


def _plan_range_scan(cfg: ExperimentConfig) -> Plan:
    n, k = cfg.n, cfg.k
    den = int(cfg.params.get("denominator", 60))
    use_lp = bool(cfg.params.get("lp", False))

    def trial(key):
        rng = _rng(key["seed"])
        r = [Fraction(int(x), den) for x in rng.integers(0, den, size=n)]
        recips = r + [1 - sum(r)]
        t = exponents.ExponentTuple(tuple(exponents.LebesgueExponent(x) for x in recips))
        holder = exponents.is_holder_tuple(t)
        dec = exponents.range_membership(n, k, t)
        row = {"recips": [str(x) for x in recips], "holder": holder, "member": bool(dec),
               "slack": str(dec.slack) if dec.slack is not None else ""}
        if use_lp:
            row["lp_agrees"] = bool(exponents.range_membership(n, k, t, method="lp")) == bool(dec)
        return row

    def verdict(rows):
        out = {"members_are_holder": all(r["holder"] for r in rows if r["member"])}
        if use_lp:
            out["lp_agrees"] = all(r["lp_agrees"] for r in rows)
        return out, {"members": sum(r["member"] for r in rows), "samples": len(rows)}

    tasks = [{"seed": cfg.base_seed + i} for i in range(cfg.seeds)]
    return Plan(cfg, tasks, trial, verdict)


EXPERIMENTS = {
    "local_estimate": _plan_local_estimate,
    "tree_estimate": _plan_tree_estimate,
    "decomposition": _plan_decomposition,
    "loomis_whitney": _plan_loomis_whitney,
    "mixed_norm_scan": _plan_mixed_norm_scan,
    "maximal_suite": _plan_maximal_suite,
    "sparse_suite": _plan_sparse_suite,
    "endpoint": _plan_endpoint,
    "range_scan": _plan_range_scan,
}


def _runner(name: str):
    def run_experiment(cfg, threads: int | None = None) -> Report:
        if isinstance(cfg, dict):
            cfg = ExperimentConfig.from_dict(cfg, name)
        elif cfg.experiment != name:
            raise ConfigError(f"config is for {cfg.experiment!r}, not {name!r}")
        return run(cfg, threads)
    run_experiment.__name__ = f"run_{name}"
    run_experiment.__doc__ = f"Run the ``{name}`` experiment from a config or a dict."
    return run_experiment


run_local_estimate = _runner("local_estimate")
run_tree_estimate = _runner("tree_estimate")
run_decomposition = _runner("decomposition")
run_loomis_whitney = _runner("loomis_whitney")
run_mixed_norm_scan = _runner("mixed_norm_scan")
run_maximal_suite = _runner("maximal_suite")
run_sparse_suite = _runner("sparse_suite")
run_endpoint = _runner("endpoint")
run_range_scan = _runner("range_scan")


# ---------------------------------------------------------------------------
# command line

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="helicoid", description="Run a numerical experiment from a JSON config.")
    p.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p.add_argument("--config", required=True, help="JSON config file")
    p.add_argument("--seed", type=int, help="base seed, overriding the config")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")
    p.add_argument("--out", help="output file (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), help="output format (default from --out, else csv)")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with open(args.config, encoding="utf-8") as fh:
            obj = json.load(fh)
        cfg = ExperimentConfig.from_dict(obj, args.experiment)
        if args.seed is not None:
            cfg = cfg.with_seed(args.seed)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        plan = build_plan(cfg)
    except (OSError, json.JSONDecodeError, ConfigError) as exc:
        sys.stderr.write(f"helicoid: {exc}\n")
        return 1
    report = _execute(plan, args.threads)
    out = args.out or cfg.output
    fmt = args.format or ("json" if out and out.endswith(".json") else "csv")
    text = report.to_json() if fmt == "json" else report.to_csv()
    if out:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for name, ok in report.verdicts.items():
        sys.stderr.write(f"{name}: {'PASS' if ok else 'FAIL'}\n")
    return 0 if report.passed else 2


if __name__ == "__main__":
    raise SystemExit(main())
