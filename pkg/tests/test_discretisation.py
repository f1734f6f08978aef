import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from perspective_sfs import discretisation as fd
from perspective_sfs.field import ScalarField
from perspective_sfs.solver import upwind_gradient

shapes = st.tuples(st.integers(1, 9), st.integers(1, 9))


@pytest.mark.parametrize(
    "values,expected",
    [([1, 3, 2], 2.0), ([1, 2, 0], -2.0), ([3, 1, 2], 0.0)],
)
def test_upwind_hand_values(values, expected):
    z = ScalarField(np.array([values], dtype=float))
    zx, zy = upwind_gradient(z, (1, 0), (1.0, 1.0))
    assert zx == expected and zy == 0.0


def test_tie_goes_backward():
    dirs = fd.upwind_directions(np.array([[1.0, 2.0, 1.0]]), 1.0, 1.0)
    assert dirs.x[0, 1] == fd.BACKWARD


def test_border_differences_vanish():
    z = np.array([[5.0, 1.0, 7.0]])
    zx, _ = fd.upwind_gradient(z, fd.upwind_directions(z, 1.0, 1.0), 1.0, 1.0)
    # left: D- = 0, D+ = -4 -> forward; right: D- = 6 -> backward
    assert zx.tolist() == [[-4.0, 0.0, 6.0]]


@given(shapes, st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_upwind_adjoint(shape, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=shape)
    p, q = rng.normal(size=shape), rng.normal(size=shape)
    hx, hy = rng.uniform(0.1, 2, 2)
    dirs = fd.upwind_directions(rng.normal(size=shape), hx, hy)
    zx, zy = fd.upwind_gradient(z, dirs, hx, hy)
    lhs = np.sum(zx * p + zy * q)
    rhs = np.sum(z * fd.upwind_adjoint(p, q, dirs, hx, hy))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


@given(shapes, st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_hessian_adjoint(shape, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(size=shape)
    g = rng.normal(size=(3,) + shape)
    hx, hy = rng.uniform(0.1, 2, 2)
    zxx, zxy, zyy = fd.hessian(z, hx, hy)
    lhs = np.sum(zxx * g[0] + zxy * g[1] + zyy * g[2])
    rhs = np.sum(z * fd.hessian_adjoint(g[0], g[1], g[2], hx, hy))
    assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_hessian_exact_on_quadratic_interior():
    b, a = np.mgrid[0:7, 0:6].astype(float)
    hx, hy = 0.5, 0.25
    x, y = a * hx, b * hy
    z = 3 * x * x + 2 * x * y - y * y
    zxx, zxy, zyy = fd.hessian(z, hx, hy)
    np.testing.assert_allclose(zxx[1:-1, 1:-1], 6.0)
    np.testing.assert_allclose(zxy[1:-1, 1:-1], 2.0)
    np.testing.assert_allclose(zyy[1:-1, 1:-1], -2.0)


def test_central_gradient_linear():
    b, a = np.mgrid[0:4, 0:5].astype(float)
    zx, zy = fd.central_gradient(2 * a * 0.1 - b * 0.2, 0.1, 0.2)
    np.testing.assert_allclose(zx, 2.0)
    np.testing.assert_allclose(zy, -1.0)
