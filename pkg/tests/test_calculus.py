import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wzlab import calculus as calc
from wzlab.approximation import forward_step_split, linear_interpolation
from wzlab.drivers import QWienerSpec, simulate_qwiener
from wzlab.paths import GridError, SamplePath, TimeGrid, deterministic
from wzlab.verify import rough_path


def staircase():
    # jumps by e1 at t=1 and e2 at t=2 on [0, 3]
    grid = TimeGrid(3.0, 3)
    values = np.array([[0, 0], [1, 0], [1, 1], [1, 1]], dtype=float)
    pre = np.array([[0, 0], [0, 0], [1, 0], [1, 1]], dtype=float)
    return SamplePath(grid, values, 1, pre)


def test_constant_integrand_telescopes(rng):
    grid = TimeGrid(1.0, 20)
    y = rough_path(rng, grid, (3,))
    c = np.array([1.0, -2.0, 0.5])
    x = SamplePath(grid, np.tile(c, (21, 1)), 1)
    out = calc.tensor_integral_left(x, y)
    expect = np.einsum("i,kj->kij", c, y.values - y.left[0])
    np.testing.assert_allclose(out.values, expect, atol=1e-12)


def test_scalar_interpolated_brownian_square(rng):
    grid = TimeGrid(1.0, 512)
    w = simulate_qwiener(QWienerSpec((1.0,)), grid, rng, batch=(50,))
    wn = linear_interpolation(w, 64)
    ito = calc.tensor_integral_left(wn, wn).values[..., -1, 0, 0]
    np.testing.assert_allclose(ito, wn.values[:, -1, 0] ** 2 / 2, rtol=1e-10, atol=1e-13)


def test_adjoint_of_left_integral(rng):
    grid = TimeGrid(1.0, 15)
    x, y = rough_path(rng, grid, (3,)), rough_path(rng, grid, (3,))
    np.testing.assert_allclose(np.swapaxes(calc.tensor_integral_left(x, y).values, -1, -2),
                               calc.tensor_integral_right(y, x).values, atol=1e-12)


def test_staircase_covariation():
    y = staircase()
    np.testing.assert_array_equal(calc.tensor_covariation(y, y).values[-1], np.eye(2))


def test_trace_identity_every_node(rng):
    grid = TimeGrid(2.0, 30)
    y = rough_path(rng, grid, (4,))
    tens = calc.tensor_covariation(y, y)
    np.testing.assert_allclose(np.trace(tens.values, axis1=-2, axis2=-1),
                               calc.scalar_covariation(y, y).values, rtol=1e-12)
    np.testing.assert_allclose(np.trace(tens.left, axis1=-2, axis2=-1),
                               calc.scalar_covariation(y, y).left, rtol=1e-12)


def test_integration_by_parts(rng):
    grid = TimeGrid(1.0, 25)
    x, y = rough_path(rng, grid, (2,)), rough_path(rng, grid, (2,))
    lhs = (np.einsum("ki,kj->kij", x.values, y.values) - np.outer(x.left[0], y.left[0])
           - calc.tensor_integral_left(x, y).values - calc.tensor_integral_right(x, y).values)
    np.testing.assert_allclose(lhs, calc.tensor_covariation(x, y).values, atol=1e-10)


def test_orthogonal_increments_have_zero_bracket():
    grid = TimeGrid(1.0, 10)
    x = deterministic(grid, lambda t: np.stack([np.sin(5 * t), 0 * t], -1))
    y = deterministic(grid, lambda t: np.stack([0 * t, t ** 2], -1))
    assert np.all(calc.scalar_covariation(x, y).values == 0)


def test_brownian_quadratic_variation(rng):
    grid = TimeGrid(2.0, 400)
    w = simulate_qwiener(QWienerSpec((1.0,)), grid, rng, batch=(400,))
    ratio = calc.scalar_covariation(w, w).values[:, -1] / grid.horizon
    se = ratio.std(ddof=1) / np.sqrt(ratio.size)
    assert abs(ratio.mean() - 1.0) < 3 * se


def test_total_variation_examples():
    grid = TimeGrid(1.0, 50)
    phi = deterministic(grid, lambda t: t, rank=0)
    assert calc.total_variation(phi).values[-1] == pytest.approx(1.0, rel=1e-12)
    y = staircase()
    assert calc.total_variation(y).values[-1] == pytest.approx(2.0)
    jumps = np.array([3.0, -4.0])
    grid3 = TimeGrid(3.0, 3)
    stair = SamplePath(grid3, np.array([0, 3, -1, -1.0]), 0, np.array([0, 0, 3, -1.0]))
    assert calc.total_variation_at_end(stair) == pytest.approx(np.abs(jumps).sum())


def test_tensor_variation_below_scalar_bracket(rng):
    grid = TimeGrid(1.0, 256)
    w = simulate_qwiener(QWienerSpec((1.0, 0.5, 0.25)), grid, rng, batch=(5,))
    z = forward_step_split(w, 16).Z
    tv = calc.total_variation(calc.tensor_covariation(z, z))
    br = calc.scalar_covariation(z, z)
    assert np.all(tv.values <= br.values + 1e-12)
    assert np.all(tv.left <= br.left + 1e-12)


def test_contract_integral_constant_and_zero(rng):
    grid = TimeGrid(1.0, 12)
    theta = rough_path(rng, grid, (2, 2))
    j = np.array([[1.0, 2.0], [-1.0, 0.5]])
    jp = SamplePath(grid, np.tile(j, (13, 1, 1)), 2)
    out = calc.contract_integral(jp, theta)
    expect = np.einsum("ij,kij->k", j, theta.values - theta.left[0])
    np.testing.assert_allclose(out.values, expect, atol=1e-12)
    zero = SamplePath(grid, np.zeros((13, 2, 2)), 2)
    assert np.all(calc.contract_integral(zero, theta).values == 0)


def test_chain_rule_first_slot(rng):
    grid = TimeGrid(1.0, 20)
    x, y = rough_path(rng, grid, (3,)), rough_path(rng, grid, (3,))
    j = rough_path(rng, grid, (3, 3))
    z = calc.tensor_integral_left(x, y)
    jx = calc.pointwise(lambda a, b: np.einsum("...ij,...i->...j", a, b), j, x, rank=1)
    np.testing.assert_allclose(calc.contract_integral(j, z).values,
                               calc.integral_left(jx, y).values, rtol=1e-10, atol=1e-10)


def test_grid_mismatch():
    a = SamplePath(TimeGrid(1.0, 4), np.zeros((5, 2)), 1)
    b = SamplePath(TimeGrid(1.0, 8), np.zeros((9, 2)), 1)
    for fn in (calc.tensor_integral_left, calc.tensor_covariation, calc.scalar_covariation):
        with pytest.raises(GridError):
            fn(a, b)
    with pytest.raises(GridError):
        calc.contract_integral(a, a)


@given(st.integers(0, 10_000), st.floats(-3, 3), st.floats(-3, 3))
def test_bilinearity(seed, a, b):
    rng = np.random.default_rng(seed)
    grid = TimeGrid(1.0, 10)
    x1, x2, y = (rough_path(rng, grid, (2,)) for _ in range(3))
    mix = x1.scaled(a) + x2.scaled(b)
    lhs = calc.tensor_integral_left(mix, y).values
    rhs = (a * calc.tensor_integral_left(x1, y).values
           + b * calc.tensor_integral_left(x2, y).values)
    np.testing.assert_allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))
