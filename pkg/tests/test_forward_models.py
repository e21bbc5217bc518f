import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mcae.forward_models.base import LinearModel, linear_surrogate, observe, observe_adjoint
from mcae.forward_models.checkpointing import binomial_capacity, reverse_sweep
from mcae.forward_models.heat import HeatModel, HeatProblem
from mcae.forward_models.navier_stokes import NSModel, NSProblem, ns_forcing
from mcae.numerics import DimensionError, NumericError


def fd_check(fm, rng, probes, h, scale_u=1.0):
    """Worst relative gap between <vjp(u, c), d> and a central difference of c^T G(u)."""
    worst = 0.0
    for _ in range(probes):
        u = scale_u * rng.standard_normal(fm.n)
        c = rng.standard_normal(fm.p)
        c /= np.linalg.norm(c)
        d = rng.standard_normal(fm.n)
        d /= np.linalg.norm(d)
        g = fm.vjp(u, c) @ d
        fd = (c @ fm.apply(u + h * d) - c @ fm.apply(u - h * d)) / (2 * h)
        worst = max(worst, abs(g - fd) / max(abs(fd), 1e-12))
    return worst


# ---------------------------------------------------------------- observation operator

def test_observe_examples():
    s = np.array([1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(observe(s, np.arange(4)), s)
    assert observe(s, []).shape == (0,)
    np.testing.assert_array_equal(observe(s, [2, 0]), [3.0, 1.0])
    with pytest.raises(DimensionError):
        observe(s, [4])


def test_observe_adjoint_is_transpose(rng):
    idx = [3, 0, 5]
    s = rng.standard_normal(7)
    c = rng.standard_normal(3)
    assert observe(s, idx) @ c == pytest.approx(s @ observe_adjoint(c, idx, 7), rel=1e-14)


def test_obs_indices_validated():
    with pytest.raises(DimensionError):
        LinearModel(np.eye(3), [0, 0])
    with pytest.raises(DimensionError):
        LinearModel(np.eye(3), [3])


# ---------------------------------------------------------------- linear surrogate

def test_linear_surrogate(rng):
    fm = linear_surrogate(np.eye(4))
    u = rng.standard_normal(4)
    np.testing.assert_array_equal(fm.apply(u), u)
    G = rng.standard_normal((5, 3))
    fm = linear_surrogate(G, [1, 4])
    c = rng.standard_normal(5)
    np.testing.assert_allclose(fm.vjp(u[:3], c), G.T @ c, rtol=1e-14)
    np.testing.assert_array_equal(fm.GB, G[[1, 4]])
    assert fd_check(fm, rng, 20, 1e-2) <= 1e-10


# ---------------------------------------------------------------- heat

@pytest.fixture(scope="module")
def heat():
    return HeatModel(HeatProblem(), [17, 40, 100])


def test_heat_dirichlet_nodes_zero(heat, rng):
    w = heat.apply(rng.standard_normal(heat.n))
    assert np.all(w[heat.dirichlet_mask] == 0.0)


def test_heat_symmetry_all_dirichlet():
    fm = HeatModel(HeatProblem(nx=9, ny=9, dirichlet=("left", "right", "top", "bottom")), [])
    W = fm.apply(np.zeros(fm.n)).reshape(9, 9)
    np.testing.assert_allclose(W, W[:, ::-1], atol=1e-12)
    np.testing.assert_allclose(W, W[::-1, :], atol=1e-12)
    np.testing.assert_allclose(W, W.T, atol=1e-12)


def test_heat_mixed_bc_reflection():
    # left/right Dirichlet, insulated bottom: mirror symmetric in x only
    fm = HeatModel(HeatProblem(nx=8, ny=8), [])
    W = fm.apply(np.zeros(fm.n)).reshape(8, 8)
    np.testing.assert_allclose(W, W[:, ::-1], atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.floats(-2, 2), st.integers(0, 2**31))
def test_heat_homogeneity(c, seed):
    fm = HeatModel(HeatProblem(nx=6, ny=5), [])
    u = np.random.default_rng(seed).standard_normal(fm.n)
    a, b = fm.apply(u + c), fm.apply(u)
    np.testing.assert_allclose(a, np.exp(-c) * b, rtol=1e-10, atol=1e-14)


def test_heat_residual_small_problem(rng):
    fm = HeatModel(HeatProblem(nx=4, ny=4), [])
    u = rng.standard_normal(fm.n)
    w = fm.apply(u)
    K = fm.stiffness(u)
    f = fm.load[fm.free]
    assert np.linalg.norm(K @ w[fm.free] - f) <= 1e-10 * np.linalg.norm(f)
    np.testing.assert_allclose(K, K.T, atol=1e-14)
    assert np.linalg.eigvalsh(K).min() > 0


def test_heat_vjp_fd(heat):
    assert fd_check(heat, np.random.default_rng(10), 20, 1e-3) <= 1e-5


def test_heat_vjp_linearity_and_zero(heat, rng):
    u = rng.standard_normal(heat.n)
    c1, c2 = rng.standard_normal(heat.p), rng.standard_normal(heat.p)
    np.testing.assert_array_equal(heat.vjp(u, np.zeros(heat.p)), 0.0)
    lhs = heat.vjp(u, 2.5 * c1 + c2)
    rhs = 2.5 * heat.vjp(u, c1) + heat.vjp(u, c2)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * np.linalg.norm(lhs)


def test_heat_batch_matches_columns(heat, rng):
    U = rng.standard_normal((heat.n, 3))
    W = heat.apply(U)
    for j in range(3):
        np.testing.assert_allclose(W[:, j], heat.apply(U[:, j]), rtol=1e-13)
    states, pb = heat.linearize(U)
    C = rng.standard_normal((heat.p, 3))
    np.testing.assert_allclose(pb(C), heat.vjp(U, C), rtol=1e-12)


def test_heat_non_finite_rejected(heat):
    u = np.zeros(heat.n)
    u[3] = np.nan
    with pytest.raises(NumericError):
        heat.apply(u)


# ---------------------------------------------------------------- Navier-Stokes

def test_ns_zero_dynamics():
    fm = NSModel(NSProblem(N=8, steps=10, forcing=False), [])
    np.testing.assert_array_equal(fm.apply(np.zeros(fm.n)), 0.0)


def test_ns_forcing_formula():
    N = 8
    f = ns_forcing(N)
    x1, x2 = 3 / N, 5 / N
    assert f[5, 3] == pytest.approx(0.1 * (np.sin(2 * np.pi * (x1 + x2)) + np.cos(2 * np.pi * (x1 + x2))))


def test_ns_single_mode_decay():
    N, nu, dt, steps = 16, 1e-2, 1e-2, 200
    fm = NSModel(NSProblem(N=N, nu=nu, dt=dt, steps=steps, advection=False, forcing=False), [])
    x = np.arange(N) / N
    X1, X2 = np.meshgrid(x, x)
    k = (2, 1)
    w0 = np.cos(2 * np.pi * (k[0] * X1 + k[1] * X2))
    wT = fm.apply(w0.ravel()).reshape(N, N)
    lam = 4 * np.pi**2 * (k[0] ** 2 + k[1] ** 2) * nu
    exact = np.exp(-lam * dt * steps)
    amp = np.sum(wT * w0) / np.sum(w0 * w0)
    # Crank-Nicolson amplification error is O(dt^2) per unit time
    assert abs(amp - exact) <= 2 * (lam * dt) ** 2 * steps * dt
    np.testing.assert_allclose(wT, amp * w0, atol=1e-12)


def test_ns_mean_vorticity_bookkeeping(rng):
    fm = NSModel(NSProblem(N=16, steps=50), [])
    w0 = rng.standard_normal(fm.n)
    wT = fm.apply(w0)
    growth = fm.problem.T * fm.forcing.mean()
    assert abs(wT.mean() - (w0.mean() + growth)) <= 1e-8


def test_ns_divergence_free(rng):
    fm = NSModel(NSProblem(N=16), [])
    v = fm.velocity(rng.standard_normal((16, 16)))
    v1, v2 = np.fft.rfft2(v[0]), np.fft.rfft2(v[1])
    div = fm.d1 * v1 + fm.d2 * v2
    assert np.max(np.abs(div)) <= 1e-12


def test_ns_vjp_fd():
    fm = NSModel(NSProblem(N=8, steps=8), [])
    assert fd_check(fm, np.random.default_rng(11), 20, 1e-5) <= 1e-4


def test_ns_vjp_zero_cotangent(rng):
    fm = NSModel(NSProblem(N=8, steps=8), [])
    np.testing.assert_array_equal(fm.vjp(rng.standard_normal(fm.n), np.zeros(fm.p)), 0.0)


def test_ns_vjp_diffusion_only(rng):
    fm = NSModel(NSProblem(N=8, steps=20, advection=False, forcing=False), [])
    u, c = rng.standard_normal(fm.n), rng.standard_normal(fm.p)
    g = fm.vjp(u, c)
    ref = fm.diffusion_propagator(c)
    assert np.linalg.norm(g - ref) <= 1e-10 * np.linalg.norm(ref)


def test_ns_checkpointed_vjp_matches_stored(rng):
    base = dict(N=8, steps=30)
    a = NSModel(NSProblem(**base), [])
    b = NSModel(NSProblem(**base, store_all=4, snapshots=3), [])
    u, c = rng.standard_normal(a.n), rng.standard_normal(a.p)
    np.testing.assert_allclose(b.vjp(u, c), a.vjp(u, c), rtol=1e-12, atol=1e-14)


def test_ns_linearize_pullback_matches_vjp(rng):
    fm = NSModel(NSProblem(N=8, steps=12), [0, 5])
    U = rng.standard_normal((fm.n, 2))
    C = rng.standard_normal((fm.p, 2))
    states, pb = fm.linearize(U)
    np.testing.assert_allclose(states, fm.apply(U), rtol=1e-13)
    np.testing.assert_allclose(pb(C), fm.vjp(U, C), rtol=1e-12, atol=1e-14)


def test_ns_cfl_recorded(rng):
    fm = NSModel(NSProblem(N=16, dt=0.5, steps=3), [])
    fm.linearize(50 * rng.standard_normal(fm.n))
    assert fm.diagnostics["cfl_max"] > 1.0 and fm.diagnostics["cfl_warning"]


# ---------------------------------------------------------------- checkpointing

@pytest.mark.parametrize("steps,store_all,snapshots", [(1, 0, 1), (7, 0, 2), (40, 4, 3), (100, 0, 5)])
def test_reverse_sweep_scalar_recurrence(steps, store_all, snapshots):
    # x_{k+1} = sin(x_k); adjoint multiplies by cos(x_k)
    x0 = 0.7
    xs = [x0]
    for _ in range(steps):
        xs.append(np.sin(xs[-1]))
    ref = 1.0
    for x in reversed(xs[:-1]):
        ref *= np.cos(x)
    stats = {}
    g = reverse_sweep(x0, steps, np.sin, lambda x, c: np.cos(x) * c, 1.0,
                      store_all=store_all, snapshots=snapshots, stats=stats)
    assert g == pytest.approx(ref, rel=1e-14)
    if steps > store_all:
        assert stats["max_held"] <= snapshots + 1


def test_binomial_capacity():
    assert binomial_capacity(3, 2) == 10
