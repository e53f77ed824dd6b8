from fractions import Fraction as F

import numpy as np
import pytest

from helicoid import wavepackets
from helicoid.dyadic import DyadicCube, Tile, whitney_collection
from helicoid.errors import ResolutionError
from helicoid.gridfn import GridFunction, bandlimited_field
from helicoid.wavepackets import analysis_matrix, build_packet, clear_cache, coefficient


def tile(j, c, m, r=0, d=1):
    return Tile(DyadicCube(d, j, (c,) * d), DyadicCube(d, -j, (m,) * d, (F(r, 3),) * d))


def allowed_bins(freq, N):
    """Bins whose midpoint lies in the 99/100 dilate, from the cube bounds directly."""
    out = []
    for lo, hi in freq.bounds():
        cen, half = (lo + hi) / 2, F(99, 100) * (hi - lo) / 2
        out.append({m for m in range(-N // 2, N // 2) if cen - half <= m + F(1, 2) < cen + half})
    return out


@pytest.fixture(scope="module")
def collection():
    return whitney_collection([[1, -1]], 1, range(0, 5), 32)


def test_support_exact_for_every_packet(collection):
    J = 7
    N = 1 << J
    seen = set()
    for i in range(len(collection)):
        for slot in range(3):
            t = collection.tile(i).component(slot)
            key = (t.freq, t.spatial.scale)
            if key in seen:
                continue
            seen.add(key)
            spec = build_packet(t, J).spectrum()
            ok = allowed_bins(t.freq, N)[0]
            freqs = np.fft.fftfreq(N, 1 / N).astype(int)
            outside = np.array([m not in ok for m in freqs])
            assert np.all(spec[outside] == 0)
            assert np.abs(spec[~outside]).max() > 0
    assert len(seen) > 20


def test_unit_norm_and_self_coefficient():
    p = build_packet(tile(-3, 5, 2, 1), 8)
    assert np.sum(np.abs(p.values.samples) ** 2) / 256 == pytest.approx(1, abs=1e-12)
    assert coefficient(p.values, p) == pytest.approx(1, abs=1e-12)


def test_unit_scale_tile_constant_modulus():
    p = build_packet(tile(0, 0, 0), 6)
    a = np.abs(p.values.samples)
    assert np.allclose(a, a[0], rtol=1e-12)


def test_disjoint_support_orthogonal():
    J = 8
    pairs = [(tile(-3, 1, 2), tile(-3, 1, 3)), (tile(-2, 0, 1, 1), tile(-4, 3, 1)),
             (tile(-3, 0, -4, -1), tile(-3, 6, 5))]
    for s, t in pairs:
        a, b = build_packet(s, J), build_packet(t, J)
        assert not set(a.bins[0].tolist()) & set(b.bins[0].tolist())
        ip = np.vdot(b.values.samples, a.values.samples) / (1 << J)
        assert abs(ip) < 1e-12


def test_coefficient_zero_off_support():
    J = 7
    p = build_packet(tile(-3, 2, 1), J)
    fh = np.zeros(1 << J, complex)
    fh[40] = 1.0
    fh[-30] = 2.0
    f = GridFunction.from_spectrum(1, J, fh)
    assert abs(coefficient(f, p)) < 1e-14


@pytest.mark.parametrize("d,J", [(1, 8), (2, 5)])
def test_parseval_oracle(d, J):
    rng = np.random.default_rng(d)
    N = 1 << J
    f = GridFunction(d, J, rng.standard_normal((N,) * d) + 1j * rng.standard_normal((N,) * d))
    for _ in range(10):
        j = -int(rng.integers(1, J - 1))
        c = int(rng.integers(0, 1 << -j))
        half = (N >> 1) >> -j
        m = int(rng.integers(-half + 1, half - 1))
        p = build_packet(tile(j, c, m, int(rng.integers(-1, 2)), d), J)
        direct = np.sum(f.samples * np.conj(p.values.samples)) / N ** d
        assert abs(coefficient(f, p) - direct) < 1e-10


def test_analysis_matrix_rows(collection):
    J = 6
    f = bandlimited_field(1, J, 16, np.random.default_rng(3), real=False)
    for slot in range(3):
        A = analysis_matrix(collection, slot, J)
        coeffs = A @ f.spectrum().ravel()
        for i in range(0, len(collection), 7):
            p = build_packet(collection.tile(i).component(slot), J)
            assert abs(coeffs[i] - coefficient(f, p)) < 1e-12


def test_vector_valued_coefficient():
    J = 6
    w = np.array([1.0, 2.0])
    rng = np.random.default_rng(0)
    f = GridFunction(1, J, rng.standard_normal((64, 2)), (w,))
    p = build_packet(tile(-2, 1, 1), J)
    c = coefficient(f, p)
    for k in range(2):
        assert c[k] == pytest.approx(coefficient(GridFunction(1, J, f.samples[:, k]), p))


def test_resolution_errors():
    with pytest.raises(ResolutionError):
        build_packet(tile(-3, 0, 20), 6)
    with pytest.raises(ResolutionError):
        build_packet(tile(-7, 0, 0), 6)
    p = build_packet(tile(-2, 0, 0), 6)
    with pytest.raises(ResolutionError):
        coefficient(GridFunction.constant(1, 7), p)


def test_refinement_consistency():
    # packets live on integer bins, so the J+1 packet restricted to the J grid is the J packet
    s = tile(-3, 3, -2, 1)
    a, b = build_packet(s, 8), build_packet(s, 9)
    assert np.allclose(b.values.samples[::2], a.values.samples, atol=1e-13)


def test_translation_covariance():
    J = 8
    a, b = build_packet(tile(-4, 2, 3), J), build_packet(tile(-4, 5, 3), J)
    shift = 3 * (1 << (J - 4))
    assert np.allclose(np.roll(a.values.samples, shift), b.values.samples, atol=1e-13)


def test_adaptedness_stable_under_refinement():
    s = tile(-4, 5, 3)
    r8 = build_packet(s, 8).adaptedness_report
    r9 = build_packet(s, 9).adaptedness_report
    assert np.isfinite(r8[4])
    assert abs(r9[4] / r8[4] - 1) < 0.05
    assert set(r8) >= {2, 4, 8, ("diff", 1), ("diff", 2)}


def test_almost_orthogonality_constant():
    J = 8
    rng = np.random.default_rng(11)
    consts = []
    for _ in range(6):
        j = -int(rng.integers(3, 5))
        m = int(rng.integers(-4, 4))
        r = int(rng.integers(-1, 2))
        p0 = build_packet(tile(j, 0, m, r), J)
        c = 0.0
        for k in range(1, (1 << -j) // 2 + 1):
            p = build_packet(tile(j, k, m, r), J)
            ip = abs(np.vdot(p.values.samples, p0.values.samples)) / (1 << J)
            c = max(c, ip * (1 + k) ** 4)
        consts.append(c)
    assert np.isfinite(consts).all()
    assert max(consts) / min(consts) < 1.5


def test_disk_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("HELICOID_CACHE", str(tmp_path))
    clear_cache()
    s = tile(-3, 1, 2)
    a = build_packet(s, 7)
    files = list(tmp_path.glob("packet-*.npz"))
    assert len(files) == 1
    clear_cache()
    b = build_packet(s, 7)
    assert np.array_equal(a.coeffs, b.coeffs)
    # a corrupted file is ignored, not trusted
    files[0].write_bytes(b"garbage")
    clear_cache()
    c = build_packet(s, 7)
    assert np.array_equal(a.coeffs, c.coeffs)
    clear_cache()


def test_gaussian_profile():
    p = build_packet(tile(-3, 1, 2), 7, "gaussian_truncated")
    assert coefficient(p.values, p) == pytest.approx(1, abs=1e-12)
    with pytest.raises(ValueError):
        build_packet(tile(-3, 1, 2), 7, "box")
    assert wavepackets.DILATE == F(99, 100)
