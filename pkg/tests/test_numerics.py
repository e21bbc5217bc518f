import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from mcae.numerics import DimensionError, NumericError, center, default_rtol, pinv, solve_spd

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False, allow_subnormal=False)


def mats(max_side=6):
    shape = st.tuples(st.integers(1, max_side), st.integers(1, max_side))
    return shape.flatmap(lambda s: arrays(np.float64, s, elements=finite))


def test_pinv_identity():
    np.testing.assert_array_equal(pinv(np.eye(3)), np.eye(3))


def test_pinv_rank_deficient_diagonal():
    np.testing.assert_allclose(pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))


def test_pinv_penrose_conditions(rng):
    A = rng.standard_normal((3, 5))
    P = pinv(A)
    s = np.linalg.norm(A)
    assert np.linalg.norm(A @ P @ A - A) <= 1e-10 * s
    assert np.linalg.norm(P @ A @ P - P) <= 1e-10 * np.linalg.norm(P)
    assert np.linalg.norm((A @ P).T - A @ P) <= 1e-10
    assert np.linalg.norm((P @ A).T - P @ A) <= 1e-10


def test_pinv_truncates_small_singular_values():
    A = np.diag([1.0, 1e-3])
    np.testing.assert_allclose(pinv(A, rtol=1e-2), np.diag([1.0, 0.0]))


def test_pinv_rejects_bad_input():
    with pytest.raises(NumericError):
        pinv(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        pinv(np.eye(2), rtol=-1.0)
    with pytest.raises(DimensionError):
        pinv(np.ones(3))


@settings(max_examples=60, deadline=None)
@given(mats())
def test_pinv_involution(A):
    # the kept spectrum must be well conditioned for the round trip to be stable
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0 or s[s > default_rtol(A.shape) * s[0]].min() < 1e-6 * s[0]:
        return
    assert np.linalg.norm(pinv(pinv(A)) - A) <= 1e-8 * max(np.linalg.norm(A), 1e-300)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(0, 4), st.integers(0, 2**32 - 1))
def test_full_row_rank_right_inverse(m, extra, seed):
    A = np.random.default_rng(seed).standard_normal((m, m + extra))
    np.testing.assert_allclose(A @ pinv(A), np.eye(m), atol=1e-8)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_row_space_identity(m, nt, seed):
    Y = center(np.random.default_rng(seed).standard_normal((m, nt)))[1]
    assert np.linalg.norm(pinv(Y) @ Y @ Y.T - Y.T) <= 1e-10 * max(np.linalg.norm(Y), 1.0)


def test_center_examples():
    xbar, Xb = center(np.array([[1.0, 3.0], [2.0, 4.0]]))
    np.testing.assert_array_equal(xbar, [2.0, 3.0])
    np.testing.assert_array_equal(Xb, [[-1.0, 1.0], [-1.0, 1.0]])
    v = np.array([1.0, -2.0, 5.0])
    for X in (np.tile(v[:, None], (1, 4)), v[:, None]):
        xbar, Xb = center(X)
        np.testing.assert_array_equal(xbar, v)
        np.testing.assert_array_equal(Xb, 0.0)
    with pytest.raises(DimensionError):
        center(np.zeros((3, 0)))


@settings(max_examples=60, deadline=None)
@given(mats())
def test_center_properties(X):
    _, Xb = center(X)
    assert np.all(np.abs(Xb.sum(axis=1)) <= 1e-12 * (1 + np.abs(X).sum(axis=1)))
    _, Xbb = center(Xb)
    np.testing.assert_allclose(Xbb, Xb, atol=1e-12 * (1 + np.abs(X).max()))


def test_solve_spd_examples(rng):
    B = rng.standard_normal((3, 2))
    np.testing.assert_array_equal(solve_spd(np.eye(3), B), B)
    np.testing.assert_allclose(solve_spd(2 * np.eye(3), np.eye(3)), 0.5 * np.eye(3))
    M = rng.standard_normal((5, 5))
    A = M.T @ M + np.eye(5)
    B = rng.standard_normal((5, 3))
    X = solve_spd(A, B)
    assert np.linalg.norm(A @ X - B) <= 1e-10 * np.linalg.norm(B)


def test_solve_spd_errors():
    with pytest.raises(NumericError, match="pivot 1"):
        solve_spd(np.diag([1.0, -1.0, 2.0]), np.ones(3))
    with pytest.raises(NumericError, match="symmetric"):
        solve_spd(np.array([[1.0, 0.5], [0.0, 1.0]]), np.ones(2))
    with pytest.raises(DimensionError):
        solve_spd(np.eye(2), np.ones(3))
