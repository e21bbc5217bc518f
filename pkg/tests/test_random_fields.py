import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcae.numerics import DimensionError, NumericError
from mcae.random_fields import (Grid, Randomizer, build_heat_kl, build_ns_kl, corrupt, make_rng,
                                ns_symbol, randomize, sample_field)


@pytest.fixture(scope="module")
def heat_basis():
    return build_heat_kl(Grid(16, 16), q=15)


@pytest.fixture(scope="module")
def ns_basis():
    return build_ns_kl(Grid(16, 16, periodic=True), q=24)


def test_heat_basis_shape_and_order(heat_basis):
    assert heat_basis.num_modes == 15
    assert heat_basis.modes.shape == (256, 15)
    lam = heat_basis.eigenvalues
    assert np.all(lam >= 0) and np.all(np.diff(lam) <= 0)


def test_modes_orthonormal(heat_basis, ns_basis):
    for b in (heat_basis, ns_basis):
        np.testing.assert_allclose(b.gram(), np.eye(b.num_modes), atol=1e-8)


def test_single_mode_is_dominant_eigenvector():
    g = Grid(5, 4)
    b1 = build_heat_kl(g, q=1)
    b5 = build_heat_kl(g, q=5)
    np.testing.assert_allclose(b1.gram(), [[1.0]], atol=1e-12)
    np.testing.assert_allclose(b1.modes[:, 0], b5.modes[:, 0], atol=1e-12)


def test_q_out_of_range():
    with pytest.raises(DimensionError):
        build_heat_kl(Grid(3, 3), q=10)


def test_indefinite_covariance_rejected():
    with pytest.raises(NumericError):
        build_heat_kl(Grid(2, 2), q=2, covariance=np.diag([1.0, 1.0, 1.0, -1.0]))


def test_identity_covariance_mc():
    g = Grid(3, 3)
    b = build_heat_kl(g, q=9, covariance=np.eye(9))
    np.testing.assert_allclose(b.eigenvalues, b.eigenvalues[0])
    U = sample_field(b, make_rng(0), size=100_000)
    C = U @ U.T / U.shape[1]
    assert np.linalg.norm(C - np.eye(9)) / 3.0 <= 5e-2


def test_heat_mc_covariance(heat_basis):
    rng = make_rng(1)
    acc = np.zeros((256, 256))
    total = 0
    for _ in range(10):
        U = sample_field(heat_basis, rng, size=10_000)
        acc += U @ U.T
        total += U.shape[1]
    C = heat_basis.covariance()
    assert np.linalg.norm(acc / total - C) / np.linalg.norm(C) <= 5e-2


def test_heat_pointwise_variance(heat_basis):
    rng = make_rng(2)
    s1 = np.zeros(256)
    s2 = np.zeros(256)
    n = 100_000
    for _ in range(10):
        U = sample_field(heat_basis, rng, size=n // 10)
        s1 += np.sum(U**2, axis=1)
        s2 += np.sum(U**4, axis=1)
    var = s1 / n
    se = np.sqrt((s2 / n - var**2) / n)
    target = heat_basis.modes**2 @ heat_basis.eigenvalues
    assert np.all(np.abs(var - target) <= 3.5 * se)


def test_ns_zero_mode_eigenvalue(ns_basis):
    assert ns_basis.eigenvalues[0] == pytest.approx(7.0**1.5 * 49.0**-2.5, rel=1e-14)
    np.testing.assert_allclose(ns_basis.modes[:, 0], 1.0)
    assert ns_basis.num_modes == 24
    assert np.all(np.diff(ns_basis.eigenvalues) <= 0)


def test_ns_symbol_values():
    assert ns_symbol(1, 0) == pytest.approx(7.0**1.5 * (4 * np.pi**2 + 49.0) ** -2.5)


def test_ns_spectral_variance(ns_basis):
    rng = make_rng(3)
    N = 16
    n = 100_000
    acc = np.zeros((N, N))
    for _ in range(10):
        U = sample_field(ns_basis, rng, size=n // 10)
        F = np.fft.fft2(U.T.reshape(-1, N, N)) / N**2
        acc += np.sum(np.abs(F) ** 2, axis=0)
    spec = acc / n
    kinds = {}
    for k1, k2, kind in ns_basis.params["wavenumbers"]:
        kinds.setdefault((k1, k2), set()).add(kind)
    for (k1, k2), ks in kinds.items():
        # a cos/sin pair puts the full eigenvalue at k; a lone cosine half of it
        full = (k1, k2) == (0, 0) or len(ks) == 2
        expect = ns_symbol(k1, k2) * (1.0 if full else 0.5)
        # grid index (j, i) carries wavenumber (k1 along x, k2 along y)
        assert abs(spec[k2 % N, k1 % N] - expect) <= 5e-2 * expect


def test_ns_requires_periodic_grid():
    with pytest.raises(DimensionError):
        build_ns_kl(Grid(8, 8), q=4)


def test_sample_field_forced_coefficients(heat_basis):
    np.testing.assert_array_equal(sample_field(heat_basis, z=np.zeros(15)), 0.0)
    b = build_heat_kl(Grid(4, 4), q=1)
    np.testing.assert_allclose(sample_field(b, z=np.ones(1)), np.sqrt(b.eigenvalues[0]) * b.modes[:, 0])
    with pytest.raises(DimensionError):
        sample_field(heat_basis, z=np.zeros(3))
    with pytest.raises(ValueError):
        sample_field(heat_basis)


def test_sample_in_span(heat_basis):
    U = sample_field(heat_basis, make_rng(4), size=20)
    P = heat_basis.modes @ np.linalg.pinv(heat_basis.modes)
    np.testing.assert_allclose(P @ U, U, atol=1e-10)


def test_determinism(heat_basis):
    a = sample_field(heat_basis, make_rng(18, 0), size=5)
    b = sample_field(heat_basis, make_rng(18, 0), size=5)
    c = sample_field(heat_basis, make_rng(18, 1), size=5)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, c)


def test_corrupt_examples():
    y = np.array([1.0, 0.0, -2.0])
    np.testing.assert_array_equal(corrupt(y, 0.0, make_rng(0)), y)
    assert corrupt(y, 0.3, make_rng(0))[1] == 0.0
    with pytest.raises(ValueError):
        corrupt(y, -0.1, make_rng(0))


def test_corrupt_std():
    y = np.array([1.0, -3.0, 0.5])
    n = 100_000
    D = corrupt(np.tile(y[:, None], (1, n)), 0.05, make_rng(5)) - y[:, None]
    sd = D.std(axis=1)
    # standard error of a sample standard deviation is about sd / sqrt(2 n)
    assert np.all(np.abs(sd - 0.05 * np.abs(y)) <= 3 * sd / np.sqrt(2 * n))


def test_randomize_examples():
    y = np.array([2.0, -1.0])
    np.testing.assert_array_equal(randomize(y, 0.0, make_rng(0)), y)
    np.testing.assert_array_equal(randomize(np.zeros(4), 0.5, make_rng(0)), 0.0)


def test_randomize_norm_statistics():
    rng = make_rng(6)
    y = make_rng(7).standard_normal(10)
    eps = 0.1
    D = randomize(np.tile(y[:, None], (1, 100_000)), eps, rng) - y[:, None]
    ms = np.mean(np.sum(D**2, axis=0))
    assert abs(ms - eps**2 * y @ y) <= 0.1 * eps**2 * (y @ y)


def test_randomizer_fresh_draws_and_counter():
    r = Randomizer(0.1, make_rng(8))
    y = np.ones((3, 2))
    a, b = r(y), r(y)
    assert r.calls == 2 and not np.array_equal(a, b)


@settings(max_examples=50, deadline=None)
@given(st.floats(0, 2), st.integers(0, 2**31))
def test_multiplicative_structure(eps, seed):
    y = np.array([0.0, 1.5, -2.0, 0.0])
    out = randomize(y, eps, make_rng(seed))
    assert out[0] == 0.0 and out[3] == 0.0
    out2 = corrupt(y, eps, make_rng(seed))
    assert out2[0] == 0.0 and out2[3] == 0.0
