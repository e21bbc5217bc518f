import numpy as np
import pytest

from mcae.forward_models.base import linear_surrogate
from mcae.forward_models.heat import HeatModel, HeatProblem
from mcae.linear_analysis import tikhonov_linear
from mcae.tikhonov import (LineSearchError, TikhonovError, TikOptions, lbfgs, strong_wolfe,
                           tikhonov_objective, tikhonov_solve)


def test_lambda_zero_returns_prior(rng):
    fm = linear_surrogate(rng.standard_normal((3, 5)))
    u0 = rng.standard_normal(5)
    res = tikhonov_solve(fm, rng.standard_normal(3), u0, 0.0)
    np.testing.assert_array_equal(res.u, u0)
    assert res.iters <= 1 and res.converged


def test_linear_equivalence_20_problems():
    rng = np.random.default_rng(8)
    for _ in range(20):
        n, m = int(rng.integers(2, 12)), int(rng.integers(1, 8))
        G = rng.standard_normal((m, n))
        lam = float(10 ** rng.uniform(-1, 2))
        y, u0 = rng.standard_normal(m), rng.standard_normal(n)
        res = tikhonov_solve(linear_surrogate(G), y, u0, lam, TikOptions(grad_tol=1e-11))
        ref = tikhonov_linear(G, y, u0, lam)
        assert np.linalg.norm(res.u - ref) <= 1e-8 * np.linalg.norm(ref)


def test_objective_gradient_fd(rng):
    fm = HeatModel(HeatProblem(nx=5, ny=5), [7, 12, 18])
    fun = tikhonov_objective(fm, rng.standard_normal(3), np.zeros(fm.n), 20.0)
    u, d = rng.standard_normal(fm.n), rng.standard_normal(fm.n)
    _, g = fun(u)
    h = 1e-5
    fd = (fun(u + h * d)[0] - fun(u - h * d)[0]) / (2 * h)
    assert g @ d == pytest.approx(fd, rel=1e-6)


def test_heat_nonincreasing_and_converged():
    fm = HeatModel(HeatProblem(nx=8, ny=8), list(range(9, 55, 4)))
    rng = np.random.default_rng(2)
    y = fm.pto(0.5 * rng.standard_normal(fm.n))
    res = tikhonov_solve(fm, y, np.zeros(fm.n), 100.0)
    assert res.status in ("converged", "stalled")
    assert np.all(np.diff(res.f_trace) <= 1e-14 * abs(res.f_trace[0]))
    _, g = tikhonov_objective(fm, y, np.zeros(fm.n), 100.0)(res.u)
    assert np.linalg.norm(g) == pytest.approx(res.grad_norm, rel=1e-10)
    if res.status == "converged":
        assert res.grad_norm <= 1e-8


def test_iteration_cap_reported(rng):
    G = rng.standard_normal((20, 20))
    res = tikhonov_solve(linear_surrogate(G), rng.standard_normal(20), np.zeros(20), 1e4,
                         TikOptions(max_iters=2))
    assert res.iters == 2 and not res.converged and res.status == "max_iters"


def test_lbfgs_rosenbrock():
    def rosen(x):
        f = 100 * (x[1] - x[0] ** 2) ** 2 + (1 - x[0]) ** 2
        g = np.array([-400 * x[0] * (x[1] - x[0] ** 2) - 2 * (1 - x[0]), 200 * (x[1] - x[0] ** 2)])
        return f, g
    res = lbfgs(rosen, np.array([-1.2, 1.0]), TikOptions(grad_tol=1e-10))
    np.testing.assert_allclose(res.u, [1.0, 1.0], atol=1e-8)


def test_strong_wolfe_quadratic():
    # phi(a) = (a - 2)^2, minimum at 2
    phi = lambda a: ((a - 2.0) ** 2, 2 * (a - 2.0))
    a, fa, ga = strong_wolfe(phi, 4.0, -4.0, 1.0, 1e-4, 0.1)
    assert fa <= 4.0 + 1e-4 * a * -4.0 and abs(ga) <= 0.4
    with pytest.raises(LineSearchError):
        strong_wolfe(phi, 4.0, 1.0)


def test_line_search_failure_raises():
    # gradient inconsistent with the objective: no step can satisfy the Wolfe conditions
    def bad(x):
        return float(x @ x), -np.ones_like(x) * 1e3
    with pytest.raises(TikhonovError) as info:
        lbfgs(bad, np.ones(3))
    assert info.value.u.shape == (3,)


def test_options_validation():
    with pytest.raises(ValueError):
        TikOptions(grad_tol=0.0)
    with pytest.raises(ValueError):
        TikOptions(c1=0.95, c2=0.9)
    fm = linear_surrogate(np.eye(2))
    with pytest.raises(ValueError):
        tikhonov_solve(fm, np.zeros(2), np.zeros(2), -1.0)
    with pytest.raises(ValueError):
        tikhonov_solve(fm, np.zeros(3), np.zeros(2), 1.0)
