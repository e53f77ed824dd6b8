"""The ten acceptance criteria, each at its stated scale and time budget."""
import itertools
import time
from fractions import Fraction as F

import numpy as np
import pytest

from helicoid.dyadic import (DyadicCube, MultiTile, Tile, TileCollection, _pair_relations, rank_k_check,
                             whitney_collection)
from helicoid.errors import ConfigError, DegenerateMatrixError
from helicoid.exponents import ExponentTuple, is_holder_tuple, range_membership
from helicoid.gridfn import GridFunction
from helicoid.harness import (
    ExperimentConfig,
    run_decomposition,
    run_endpoint,
    run_local_estimate,
    run_loomis_whitney,
    run_maximal_suite,
    run_sparse_suite,
    run_tree_estimate,
)
from helicoid.wavepackets import build_packet, coefficient

THIRDS = (F(-1, 3), F(0), F(1, 3))


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


# --- 1 -------------------------------------------------------------------

def test_criterion_01_exponents(verdict):
    rng = np.random.default_rng(1)
    with Timer() as t:
        accepted = 0
        all_in = True
        while accepted < 1000:
            r = [F(int(x), 96) for x in rng.integers(0, 49, 2)]
            last = 1 - sum(r)
            if not 0 <= last <= F(1, 2):
                continue
            tup = ExponentTuple.from_recips(r + [last])
            if not is_holder_tuple(tup):
                continue
            all_in &= bool(range_membership(2, 1, tup))
            accepted += 1
        bad = ExponentTuple.from_recips([F(3, 4), F(3, 4), F(-1, 2)])
        rejects = is_holder_tuple(bad) and not range_membership(2, 1, bad)
        counter = 0
        members = 0
        for _ in range(10_000):
            r = [F(int(x), 30) for x in rng.integers(0, 30, 4)]
            tup = ExponentTuple.from_recips(r + [1 - sum(r)])
            if not range_membership(4, 2, tup):
                continue
            members += 1
            for i1, i2, i3 in itertools.combinations(range(4), 3):
                counter += not (r[i1] + r[i3] < F(3, 2) and r[i1] + r[i2] + r[i3] < 2)
    verdict(1, "exponent engine", {
        "closed local L2 accepted": all_in,
        "(4/3, 4/3, .) rejected": rejects,
        "n=4 k=2 implication": counter == 0 and members > 0,
        "runtime < 10 s": t.elapsed < 10,
    }, f"{members} members checked, {t.elapsed:.1f}s")


# --- 2 -------------------------------------------------------------------

def _generic(rng, d, n, k):
    while True:
        A = rng.integers(-3, 4, (d * (n - k), d * n))
        try:
            whitney_collection(A, d, [], 1)
            return A
        except DegenerateMatrixError:
            continue


def _lattice_ok(shift, J=6):
    cubes = []
    for j in range(-J, J + 1):
        side = F(2) ** j
        for k in range(int(-2 / side) - 2, int(2 / side) + 2):
            q = DyadicCube(1, j, (k,), (shift,))
            (lo, hi), = q.bounds()
            if hi > -2 and lo < 2:
                cubes.append(q)
    scale = 3 * 2 ** J
    lo = np.array([int(q.bounds()[0][0] * scale) for q in cubes])
    hi = np.array([int(q.bounds()[0][1] * scale) for q in cubes])
    meet = (lo[:, None] < hi[None, :]) & (lo[None, :] < hi[:, None])
    inside = (lo[:, None] >= lo[None, :]) & (hi[:, None] <= hi[None, :])
    return not (meet & ~(inside | inside.T)).any()


def _order_tables(J=6, box=32):
    tiles = []
    for l in range(J + 1):
        for c in range(2 ** l):
            for r in THIRDS:
                for m in range(-box >> l, max(box >> l, 1)):
                    tiles.append(MultiTile(DyadicCube(1, -l, (c,)), (DyadicCube(1, l, (m,), (r,)),) * 2))
    S = TileCollection.from_tiles(tiles, 1, 0, 1)
    rel = _pair_relations(S, np.arange(len(S)), np.arange(len(S)), 9)
    le, ls = rel["le"][..., 0], rel["ls"][..., 0]
    return le, ls, len(S)


def _closed(R):
    Ri = R.astype(np.int32)
    return not ((Ri @ Ri > 0) & ~R).any()


def test_criterion_02_geometry(verdict):
    with Timer() as t:
        rng = np.random.default_rng(0)
        rank_ok = True
        nonempty = 0
        for i in range(20):
            d, n, k = 1 + i % 2, 2 + (i // 2) % 2, (i // 4) % 2
            A = _generic(rng, d, n, k)
            box = (32 if d == 1 else 8) if n == 2 else (16 if d == 1 else 4)
            S = whitney_collection(A, d, range(0, 5 if d == 1 else 3), box, lo=1, hi=6)
            rank_ok &= bool(rank_k_check(S))
            nonempty += len(S) > 0
        lattice = all(_lattice_ok(r) for r in THIRDS)
        le, ls, size = _order_tables()
        lt = le & ~np.eye(size, dtype=bool)
        chain = ((lt.astype(np.int32) @ lt.astype(np.int32)) > 0)
    verdict(2, "geometry", {
        "rank_k_check on 20 generic matrices": rank_ok and nonempty >= 15,
        "lattice |j|<=6": lattice,
        "<= transitive": _closed(le),
        "lesssim transitive": _closed(ls),
        "< then < gives lesssim": not (chain & ~ls).any(),
        "<= implies lesssim": not (le & ~ls).any(),
        "runtime < 60 s": t.elapsed < 60,
    }, f"{size} tiles, {t.elapsed:.1f}s")


# --- 3 -------------------------------------------------------------------

def _allowed(freq, N):
    (lo, hi), = freq.bounds()
    cen, half = (lo + hi) / 2, F(99, 100) * (hi - lo) / 2
    return {m for m in range(-N // 2, N // 2) if cen - half <= m + F(1, 2) < cen + half}


def test_criterion_03_packets(verdict):
    J = 8
    N = 1 << J
    with Timer() as t:
        S = whitney_collection([[1, -1]], 1, range(0, 7), 64)
        tiles = {S.tile(i).component(j) for i in range(len(S)) for j in range(3)}
        freqs = np.fft.fftfreq(N, 1 / N).astype(int)
        support = True
        packets = {}
        for tl in tiles:
            p = build_packet(tl, J)
            packets[tl] = p
            ok = _allowed(tl.freq, N)
            outside = np.array([m not in ok for m in freqs])
            support &= bool(np.all(p.spectrum()[outside] == 0)) and bool(np.abs(p.spectrum()[~outside]).max() > 0)
        # orthogonality over every pair with disjoint bin sets
        plist = list(packets.values())
        bins = [set(p.bins[0].tolist()) for p in plist]
        V = np.stack([p.values.samples for p in plist])
        G = np.abs(V.conj() @ V.T) / N
        disjoint = np.array([[not (a & b) for b in bins] for a in bins])
        ortho = float(G[disjoint].max()) if disjoint.any() else 0.0
        # Parseval: coefficient through the spectrum against the spatial Riemann sum
        rng = np.random.default_rng(3)
        f = GridFunction(1, J, rng.standard_normal(N) + 1j * rng.standard_normal(N))
        pars = max(abs(coefficient(f, p) - np.sum(f.samples * np.conj(p.values.samples)) / N)
                   for p in plist)
    verdict(3, "packets", {
        "support exact": support,
        "disjoint orthogonality 1e-12": ortho < 1e-12,
        "Parseval 1e-10": pars < 1e-10,
        "runtime < 30 s": t.elapsed < 30,
    }, f"{len(plist)} packets, {int(disjoint.sum())} disjoint pairs, {t.elapsed:.1f}s")


# --- 4 -------------------------------------------------------------------

def test_criterion_04_tree_estimate(verdict):
    with Timer() as t:
        rep = run_tree_estimate({"d": 1, "n": 2, "k": 1, "J": 8, "seeds": 200})
    verdict(4, "tree estimate", {**rep.verdicts, "runtime < 5 min": t.elapsed < 300},
            f"max {rep.summary['max@J=8']:.4g} -> {rep.summary['max@J=9']:.4g}, {t.elapsed:.0f}s")


# --- 5 -------------------------------------------------------------------

def test_criterion_05_decomposition(verdict):
    with Timer() as t:
        rep = run_decomposition({"d": 1, "n": 2, "k": 1, "seeds": 100})
    s = rep.summary
    verdict(5, "decomposition", {**rep.verdicts, "runtime < 5 min": t.elapsed < 300},
            f"energy {s['max_energy_ratio_base']:.4g} -> {s['max_energy_ratio_doubled']:.4g} "
            f"({s['tiles_base']} -> {s['tiles_doubled']} tiles), {t.elapsed:.0f}s")


# --- 6 -------------------------------------------------------------------

def test_criterion_06_local_estimate(verdict):
    with Timer() as t:
        rep = run_local_estimate({"d": 1, "n": 2, "k": 1, "alpha": ["1/3"] * 3, "seeds": 100})
        try:
            ExperimentConfig.from_dict({"experiment": "local_estimate", "alpha": [0.6, 0.2, 0.2]})
            rejected = False
        except ConfigError:
            rejected = True
    s = rep.summary
    verdict(6, "local estimate", {**rep.verdicts, "alpha (0.6, 0.2, 0.2) rejected": rejected,
                                  "runtime < 10 min": t.elapsed < 600},
            f"max {s['max@J=8']:.4g} -> {s['max@J=9']:.4g}, {t.elapsed:.0f}s")


# --- 7 -------------------------------------------------------------------

def test_criterion_07_maximal(verdict):
    with Timer() as t:
        rep = run_maximal_suite({"seeds": 100, "params": {"P": [["inf", 2], [2, "inf"]]}})
    s = rep.summary
    verdict(7, "maximal suite", {**rep.verdicts, "runtime < 10 min": t.elapsed < 600},
            f"max {s['max@J=6']:.4g} -> {s['max@J=7']:.4g}, {t.elapsed:.0f}s")


# --- 8 -------------------------------------------------------------------

def test_criterion_08_endpoint(verdict):
    with Timer() as t:
        rep = run_endpoint({"q": "1/2", "s": [2, 2], "seeds": 1})
    verdict(8, "endpoint sum", {**rep.verdicts, "5x5x5x3 grid": len(rep.rows) == 375,
                                "runtime < 30 s": t.elapsed < 30},
            f"C = {rep.summary['constant']:.4g}, max ratio {rep.summary['max_ratio']:.4g}, {t.elapsed:.1f}s")


# --- 9 -------------------------------------------------------------------

def test_criterion_09_sparse(verdict):
    with Timer() as t:
        rep = run_sparse_suite({"d": 1, "n": 2, "k": 1, "seeds": 50, "params": {"eta": "1/2"}})
    s = rep.summary
    verdict(9, "sparse domination", {**rep.verdicts, "runtime < 5 min": t.elapsed < 300},
            f"max {s['max@J=8']:.4g} -> {s['max@J=9']:.4g}, {t.elapsed:.0f}s")


# --- 10 ------------------------------------------------------------------

def test_criterion_10_loomis_whitney(verdict):
    with Timer() as t:
        prod = run_loomis_whitney({"d": 4, "seeds": 50, "params": {"mode": "product", "p": 1}})
        mdl = run_loomis_whitney({"d": 2, "seeds": 50, "params": {"mode": "model"}})
    verdict(10, "Loomis-Whitney", {
        "product ratio <= 1 + 1e-6": prod.verdicts["constant_one"],
        "model finite": mdl.verdicts["finite"],
        "model two-resolution stable": mdl.verdicts["two_resolution_stable"],
        "runtime < 10 min": t.elapsed < 600,
    }, f"product max {prod.summary['max_ratio']:.4g}, model change {mdl.summary['relative_change']:+.3f}, "
       f"{t.elapsed:.0f}s")
