"""Acceptance criteria, one PASS/FAIL line each (see the terminal summary)."""

import math
import time

import numpy as np
import pytest

from conftest import record
from wzlab import calculus as calc
from wzlab.approximation import linear_interpolation
from wzlab.config import default_config
from wzlab.drivers import (MarkovDriverSpec, MollifiedNoiseSpec, QWienerSpec,
                           markov_limit_covariance, simulate_markov_driver,
                           simulate_mollified_noise, simulate_qwiener, white_noise)
from wzlab.harness import run_scenario
from wzlab.paths import TimeGrid
from wzlab.rng import replicate_rng
from wzlab.verify import TOL, run_verify

pytestmark = pytest.mark.slow

REPS = 10_000


def timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


@pytest.fixture(scope="module")
def scalar_report():
    return timed(lambda: run_scenario(default_config("scalar-wz")))


@pytest.fixture(scope="module")
def hilbert_report():
    return timed(lambda: run_scenario(default_config("hilbert-interpolation")))


def test_1_scalar_correction():
    def body():
        grid = TimeGrid(1.0, 512)
        worst, diffs = 0.0, []
        for start in range(0, REPS, 2000):
            normals = np.stack([replicate_rng(1, r).standard_normal((grid.steps, 1))
                                for r in range(start, start + 2000)])
            w = simulate_qwiener(QWienerSpec((1.0,)), grid, normals=normals)
            wn = linear_interpolation(w, 64)
            strat = calc.integral_left(wn, wn).values[:, -1]
            half = wn.values[:, -1, 0] ** 2 / 2
            # rounding in the running sums scales with the path, not with W_n(1)
            scale = np.maximum(1.0, np.max(wn.values[..., 0] ** 2, axis=-1))
            worst = max(worst, float(np.max(np.abs(strat - half) / scale)))
            ito = calc.integral_left(w, w).values[:, -1]
            diffs.append(strat - ito)
        return worst, np.concatenate(diffs)

    (worst, diff), secs = timed(body)
    mean, se = diff.mean(), diff.std(ddof=1) / math.sqrt(diff.size)
    ok = worst <= 1e-10 and abs(mean - 0.5) <= 3 * se and secs <= 60
    assert record("1", ok, f"per-path |int W_n dW_n - W_n(1)^2/2| / path scale, max {worst:.1e} (tol 1e-10); "
                           f"mean(Strat - Ito) = {mean:.5f} +/- {se:.5f}, target 0.5 within 3 SE; "
                           f"{secs:.1f}s (limit 60s)")


def test_2a_scalar_errors_decrease(scalar_report):
    rep, secs = scalar_report
    errs = ", ".join(f"{e:.4f}" for e in rep.errors)
    ok = rep.monotone(2.0) and all(b < a for a, b in zip(rep.errors, rep.errors[1:]))
    assert record("2a", ok, f"coupled mean sup-errors over n=8,16,32,64: {errs} decrease "
                            f"(within 2 SE); rate {rep.rate:.3f}; {secs:.1f}s")


def test_2b_terminal_mean(scalar_report):
    rep, _ = scalar_report
    lv = rep.level(64)
    target = math.exp(0.5)
    lim_ok = abs(lv.limit_terminal_mean - target) <= 3 * lv.limit_terminal_se
    xn_ok = abs(lv.terminal_mean - target) <= 3 * lv.terminal_se
    assert record("2b", lim_ok and xn_ok,
                  f"E X(1) = {lv.limit_terminal_mean:.4f} +/- {lv.limit_terminal_se:.4f}, "
                  f"E X_64(1) = {lv.terminal_mean:.4f} +/- {lv.terminal_se:.4f}, "
                  f"target e^0.5 = {target:.4f} within 3 SE")


def test_2c_error_ratio(scalar_report):
    rep, _ = scalar_report
    ratio = rep.errors[-1] / rep.errors[0]
    assert record("2c", ratio <= 1 / 3, f"final/first mean sup-error = {ratio:.3f} (need <= 0.333)")


def test_3_tensor_limits(hilbert_report):
    rep, secs = hilbert_report
    lv = rep.level(64)
    q = np.diag([1.0, 0.5, 0.25, 0.125])
    zh = np.abs(lv.tensors["H"]["mean"] + q / 2) / lv.tensors["H"]["se"]
    zk = np.abs(lv.tensors["K"]["mean"] + q) / lv.tensors["K"]["se"]
    ok = zh.max() <= 3 and zk.max() <= 3 and secs <= 180
    assert record("3", ok, f"n=64: max |H_n(1) + Q/2|/SE = {zh.max():.2f}, "
                           f"max |K_n(1) + Q|/SE = {zk.max():.2f} (need <= 3); {secs:.1f}s (limit 180s)")


def test_4_exact_identities():
    results, secs = timed(lambda: run_verify(100))
    worst = max(r.worst for r in results)
    ok = all(r.passed for r in results) and secs < 5
    names = ", ".join(r.name for r in results)
    assert record("4", ok, f"{len(results)} identities ({names}) worst relative residual "
                           f"{worst:.1e} (tol {TOL:g}) over 100 seeds; {secs:.2f}s")


def test_5_mollified_moment_bound():
    spec = MollifiedNoiseSpec.gaussian(16)
    grid = TimeGrid(1.0, 128)
    s_hs2 = float(np.sum(spec.S ** 2))
    rows, ok = [], True
    sums = {n: np.zeros(grid.steps + 1) for n in (4, 8, 16)}
    for start in range(0, REPS, 2000):
        rng = replicate_rng(5, start)
        noise = white_noise(spec, grid, rng, (2000,))
        for n in sums:
            _, z, _ = simulate_mollified_noise(spec, n, grid, noise=noise)
            sums[n] += np.sum(z.values ** 2, axis=-1).sum(axis=0)
    for n, tot in sums.items():
        worst = float(np.max(tot / REPS))
        bound = s_hs2 / n
        unsq = np.sqrt(np.sum((spec.spatial_mollifier(n) @ spec.S) ** 2)) / n
        ok &= worst <= 1.1 * bound
        rows.append(f"n={n}: max_t E|Z_n|^2 = {worst:.4f} vs 1.1*|S|^2/n = {1.1 * bound:.4f} "
                    f"(unsquared |S_n S|/n = {unsq:.4f}, {'holds' if worst <= unsq else 'fails'})")
    assert record("5", ok, "; ".join(rows))


def test_6_markov_covariance():
    pi = np.array([2 / 3, 1 / 3])
    spec = MarkovDriverSpec(np.array([[0.7, 0.3], [0.6, 0.4]]), pi, S=np.diag(np.sqrt(pi)))
    n = 128
    uni = np.stack([replicate_rng(6, r).random(n + 1) for r in range(REPS)])
    y, _ = simulate_markov_driver(spec, n, 1.0, uniforms=uni)
    y1 = y.values[:, -1]
    basis = np.eye(2)
    worst = 0.0
    for i in range(2):
        for j in range(2):
            target = markov_limit_covariance(spec, basis[i], basis[j])
            prod = (y1[:, i] - y1[:, i].mean()) * (y1[:, j] - y1[:, j].mean())
            se = prod.std(ddof=1) / math.sqrt(REPS)
            worst = max(worst, abs(prod.mean() * REPS / (REPS - 1) - target) / se)
    cov = np.cov(y1.T)
    assert record("6", worst <= 3, f"n=128: empirical Cov = {np.round(cov, 4).tolist()} vs exact "
                                   f"[[0.22, -0.22], [-0.22, 0.22]]; max |diff|/SE = {worst:.2f}")


def test_7_non_ut_witness(hilbert_report):
    rep, _ = hilbert_report
    tv_u = [row["TV_U"]["q50"] for row in rep.ut]
    tv_h = [row["TV_H"]["q50"] for row in rep.ut]
    grows = all(b > a for a, b in zip(tv_u, tv_u[1:]))
    tight = all(0.5 * tv_h[0] <= v <= 2 * tv_h[0] for v in tv_h)
    assert record("7", grows and tight,
                  f"median T_1(U_n) = {', '.join(f'{v:.2f}' for v in tv_u)} (strictly increasing); "
                  f"median T_1(H_n) = {', '.join(f'{v:.3f}' for v in tv_h)} (within 2x of n=8)")
