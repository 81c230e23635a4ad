import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wzlab.approximation import forward_step_split, linear_interpolation
from wzlab.drivers import QWienerSpec, simulate_qwiener
from wzlab.harness import example_augmented_field
from wzlab.paths import SamplePath, TimeGrid, deterministic
from wzlab.sde import (BlowUpWarning, CoefficientField, aborted, augmented_correction,
                       augmented_field, augmented_state, check_derivatives, constant_field,
                       correction_field, linear_field, linear_vector_field, sine_field,
                       solve_limit, solve_pathwise)


def brownian(rng, d=1, steps=128, batch=(20,), lam=None):
    lam = (1.0,) * d if lam is None else lam
    return simulate_qwiener(QWienerSpec(lam), TimeGrid(1.0, steps), rng, batch=batch)


def zero_theta(grid, d):
    return SamplePath(grid, np.zeros((grid.steps + 1, d, d)), 2)


def half_t_theta(grid, q):
    return deterministic(grid, lambda t: 0.5 * t[:, None, None] * q, rank=2, linear=True)


def test_zero_field_keeps_initial_state(rng):
    w = brownian(rng, 2)
    sp = forward_step_split(w, 8)
    x = solve_pathwise(constant_field(np.zeros(2)), sp.Y, sp.Z, 0.7)
    assert np.all(x.values == 0.7)


def test_linear_field_matches_exponential_of_interpolant(rng):
    w = brownian(rng, steps=64)
    sp = forward_step_split(w, 8)
    exact = np.exp(sp.U.values[..., 0] - sp.U.values[..., :1, 0])
    errs = [np.abs(solve_pathwise(linear_field([1.0]), sp.Y, sp.Z, 1.0, s).values - exact).max()
            for s in (1, 2, 4, 8, 16)]
    ratios = [a / b for a, b in zip(errs, errs[1:])]
    assert all(1.6 < r < 2.4 for r in ratios[1:]), ratios


def test_constant_field_telescopes(rng):
    h = np.array([0.3, -1.2])
    w = brownian(rng, 2)
    sp = forward_step_split(w, 16)
    x = solve_pathwise(constant_field(h), sp.Y, sp.Z, 2.0, substeps=3)
    np.testing.assert_allclose(x.values, 2.0 + (sp.U.values - sp.U.values[:, :1]) @ h, atol=1e-12)
    lim = solve_limit(constant_field(h), w, half_t_theta(w.grid, np.eye(2)), 2.0)
    np.testing.assert_allclose(lim.values, 2.0 + w.values @ h, atol=1e-12)


def test_zero_correction_is_plain_euler(rng):
    w = brownian(rng, steps=32, batch=(4,))
    fld = sine_field([0.8])
    x = solve_limit(fld, w, zero_theta(w.grid, 1), 0.3)
    manual = np.full(4, 0.3)
    path = [manual.copy()]
    for dw in np.diff(w.values[..., 0], axis=1).T:
        manual = manual + 0.8 * np.sin(manual) * dw
        path.append(manual.copy())
    np.testing.assert_allclose(x.values, np.stack(path, axis=1), rtol=1e-13)


def test_geometric_limit_terminal_mean(rng):
    w = brownian(rng, steps=256, batch=(10_000,))
    x = solve_limit(linear_field([1.0]), w, half_t_theta(w.grid, np.eye(1)), 1.0)
    xt = x.values[:, -1]
    se = xt.std(ddof=1) / np.sqrt(xt.size)
    assert abs(xt.mean() - np.exp(0.5)) < 3 * se


def test_correction_field_scalar_examples():
    assert np.all(correction_field(constant_field([1.0, 2.0]), np.array([0.4, -3.0])) == 0)
    x = np.array([-1.5, 0.0, 2.0])
    t = correction_field(linear_field([1.0]), x)
    np.testing.assert_allclose(t[:, 0, 0], x)   # Df f = 1 * x, so drift x dt / 2
    h = np.array([1.0, 2.0])
    t = correction_field(sine_field(h), 0.3)
    np.testing.assert_allclose(t, np.cos(0.3) * np.sin(0.3) * np.outer(h, h))


def test_correction_field_vector_linear():
    a = np.random.default_rng(0).standard_normal((3, 2, 3))
    fld = linear_vector_field(a)
    x = np.array([0.5, -1.0, 2.0])
    t = correction_field(fld, x)
    f = np.einsum("aib,b->ai", a, x)
    np.testing.assert_allclose(t, np.einsum("aib,bj->aij", a, f))


def test_augmented_identity_in_u_keeps_only_u_block():
    d = 3
    fld = augmented_field(lambda t, x, u: u, lambda t, x, u: np.zeros(np.shape(u)),
                          lambda t, x, u: np.zeros(np.shape(u)),
                          lambda t, x, u: np.broadcast_to(np.eye(d), np.shape(t) + (d, d)), d)
    s = augmented_state(0.2, 0.4, np.array([1.0, -1.0, 0.5]))
    xi = np.random.default_rng(1).standard_normal((1 + 2 * d, 1 + 2 * d))
    drift = np.einsum("aij,ij->a", correction_field(fld, s), xi)
    assert drift[1] == pytest.approx(np.trace(xi[1:1 + d, 1 + d:]))
    assert np.all(drift[[0, 2, 3, 4]] == 0)


@given(st.integers(0, 10_000), st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 1))
def test_augmented_block_structure(seed, x, c, t):
    rng = np.random.default_rng(seed)
    d = 2
    h = rng.standard_normal(d)
    u = rng.standard_normal(d)
    fld = example_augmented_field(h, c)
    s = augmented_state(t, x, u)
    xi = rng.standard_normal((1 + 2 * d, 1 + 2 * d))
    drift = np.einsum("aij,ij->a", correction_field(fld, s), xi)
    sigma = (1 + t / 2) * np.sin(x) * h + c * u
    d_t = 0.5 * np.sin(x) * h
    d_x = (1 + t / 2) * np.cos(x) * h
    b2 = slice(1, 1 + d)
    b3 = slice(1 + d, None)
    expect = (d_t @ xi[b2, 0] + d_x @ xi[b2, b2] @ sigma + np.trace(c * np.eye(d) @ xi[b2, b3]))
    assert drift[1] == pytest.approx(expect, rel=1e-12, abs=1e-12)
    assert np.all(drift[[0, 2, 3]] == 0)


def test_augmented_correction_blocks():
    th = np.array([[1.0, 2.0], [3.0, 4.0]])
    big = augmented_correction(th, 2)
    assert big.shape == (5, 5)
    assert np.all(big[0] == 0) and np.all(big[:, 0] == 0)
    for r in (slice(1, 3), slice(3, 5)):
        for c in (slice(1, 3), slice(3, 5)):
            np.testing.assert_array_equal(big[r, c], th)


def test_check_derivatives():
    probes = np.linspace(-2, 2, 9)
    assert check_derivatives(linear_field([1.0, -2.0]), probes).passed
    rep = check_derivatives(sine_field([0.5, 1.0]), probes)
    assert rep.passed and rep.first < 1e-6
    bad = CoefficientField(np.sin, lambda x: 1.01 * np.cos(x)[..., None],
                           None, 1, name="bad")
    wrapped = CoefficientField(lambda x: np.sin(x)[..., None], bad.df, None, 1)
    assert not check_derivatives(wrapped, probes).passed
    fld = example_augmented_field(np.array([1.0, 0.5]), 0.5)
    pts = np.stack([augmented_state(0.3, x, np.array([x, -x])) for x in probes])
    assert check_derivatives(fld, pts).passed
    with pytest.raises(ValueError):
        check_derivatives(fld, pts, h=0.0)


def test_blow_up_aborts_replicates(rng):
    w = brownian(rng, steps=32, batch=(6,))
    sp = forward_step_split(w, 4)
    x0 = np.array([1.0, 1e9, 1.0, 1.0, 1.0, 1.0])
    with pytest.warns(BlowUpWarning):
        x = solve_pathwise(linear_field([1.0]), sp.Y, sp.Z, x0)
    flags = aborted(x)
    assert flags.tolist() == [False, True, False, False, False, False]
    assert np.all(np.isfinite(x.values[~flags]))


def test_substep_refinement_below_level_error(rng):
    w = brownian(rng, steps=256, batch=(400,))
    fld = linear_field([1.0])
    lim = solve_limit(fld, w, half_t_theta(w.grid, np.eye(1)), 1.0).values[:, -1]
    sp = forward_step_split(w, 8)
    coarse = solve_pathwise(fld, sp.Y, sp.Z, 1.0, 2).values[:, -1]
    fine = solve_pathwise(fld, sp.Y, sp.Z, 1.0, 4).values[:, -1]
    assert np.mean(np.abs(fine - coarse)) < np.mean(np.abs(fine - lim))


def test_vector_state_shape_checked():
    fld = linear_vector_field(np.zeros((2, 1, 2)))
    grid = TimeGrid(1.0, 4)
    y = SamplePath(grid, np.zeros((5, 1)), 1)
    with pytest.raises(ValueError):
        solve_pathwise(fld, y, y, np.zeros(3))
