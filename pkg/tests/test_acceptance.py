"""Acceptance suite.

Each test enforces one shipping criterion at its stated scale and tolerance
and prints a PASS line (visible with -s / on failure).  The convergence
studies behind criteria 5-7 are computed once per problem at module scope
on a two-process pool and shared; every cell is a pure function of
(problem, size, trial, mode, seed, config), so the shared grids are
identical to standalone runs of each criterion's protocol.
"""

import math
import os
import time

import numpy as np
import pytest
from scipy.integrate import quad

from diffint import sampling
from diffint.cli import emit_plot, main as cli_main
from diffint.harness import fit_loglog_slope, run_convergence, unbiasedness_report
from diffint.network import LossWeights, forward, init, input_jacobian, loss_and_gradient
from diffint.problems import (
    PROBLEM_IDS,
    generate_dataset,
    get_problem,
    ground_truth,
    kou_density_and_grads,
    _nig_cdf_quadrature,
    _piecewise_cheb_coeffs,
)
from diffint.specfun import bessel_i, bessel_k1, digamma, ellip_f, gauss_chebyshev, reg_lower_inc_gamma
from diffint.training import TrainConfig, train
from oracles import (
    bessel_i_series,
    bessel_k_quad,
    chebyshev_weight_poly_integral,
    digamma_series,
    ellip_f_quad,
    kronecker_points,
    pathwise_fd_max_err,
    reg_inc_gamma_quad,
)

SEED = 0
SIZES = [1 << k for k in range(10, 17)]
TRIALS = 10
JOBS = min(2, os.cpu_count() or 1)


def _announce(criterion, text):
    print(f"\nACCEPTANCE {criterion}: PASS - {text}")


# ---------------------------------------------------------------------------
# 1. special functions vs their brute-force oracles (1000 points each)

def test_criterion_1_special_function_oracle_suite():
    t0 = time.time()
    u = kronecker_points(1000, 2)

    x = 10.0 ** (-3.0 + 6.0 * u[:, 0])
    assert np.abs(digamma(x) - digamma_series(x)).max() <= 1e-12

    s = 0.1 + 5.9 * u[:, 0]
    xg = 30.0 * u[:, 1]
    pg = reg_lower_inc_gamma(s, xg)
    want = np.array([reg_inc_gamma_quad(a, b) for a, b in zip(s, xg)])
    assert np.abs(pg - want).max() <= 1e-12

    orders = (u[:, 0] * 65).astype(int)
    xb = -50.0 + 100.0 * u[:, 1]
    for l, xi in zip(orders, xb):
        ref = bessel_i_series(int(l), float(xi))
        assert abs(bessel_i(int(l), float(xi)) - ref) <= 1e-10 * max(abs(ref), 1e-300)

    xk = 10.0 ** (-3.0 + u[:, 0] * (math.log10(50.0) + 3.0))
    wk = np.array([bessel_k_quad(1, xi) for xi in xk])
    assert (np.abs(bessel_k1(xk) - wk) / wk).max() <= 1e-9

    b = 0.01 + (math.pi / 2 - 0.01) * u[:, 0]
    th = 0.99 * u[:, 1]
    we = np.array([ellip_f_quad(bi, ti) for bi, ti in zip(b, th)])
    assert (np.abs(ellip_f(b, th) - we) / we).max() <= 1e-10

    rng = np.random.default_rng(SEED)
    for n in (1, 2, 5, 16):
        rule = gauss_chebyshev(n)
        coeffs = rng.normal(0.0, 1.0, 2 * n)
        got = rule.integrate(lambda xx: np.polyval(coeffs[::-1], xx))
        assert got == pytest.approx(chebyshev_weight_poly_integral(coeffs), rel=1e-12, abs=1e-12)

    assert time.time() - t0 < 60.0
    _announce(1, f"5 kernels x 1000 oracle points in {time.time() - t0:.1f}s")


# ---------------------------------------------------------------------------
# 2. label correctness for all 11 problem variants

@pytest.mark.parametrize("pid", PROBLEM_IDS)
def test_criterion_2_label_correctness(pid):
    problem = get_problem(pid)
    worst = pathwise_fd_max_err(problem, 1000, seed=SEED)
    assert worst <= 1e-6, f"pathwise gradients off by {worst:.2e}"
    label_rows, grad_rows = unbiasedness_report(problem, points=5, samples=10 ** 6, seed=SEED)
    bad = [r for r in label_rows + grad_rows if not r.passed]
    assert not bad, bad[:3]
    _announce(2, f"{pid}: pathwise fd {worst:.1e}, "
                 f"{len(label_rows)} label + {len(grad_rows)} gradient means unbiased")


# ---------------------------------------------------------------------------
# 3. twin-network exactness

def test_criterion_3_twin_network_exactness():
    t0 = time.time()
    rng = np.random.default_rng(SEED)
    params = init((2, 8, 8, 1), "softplus", seed=17)
    for bias in params.biases:
        bias += rng.normal(0.0, 0.3, bias.shape)

    x = rng.normal(0.0, 1.0, (50, 2))
    jac = input_jacobian(params, x)
    for c in range(2):
        h = 1e-6 * (1.0 + np.abs(x[:, c]))
        up, dn = x.copy(), x.copy()
        up[:, c] += h
        dn[:, c] -= h
        fd = (forward(params, up) - forward(params, dn)) / (2 * h[:, None])
        rel = np.abs(fd - jac[:, :, c]) / np.maximum(np.abs(jac[:, :, c]), 1e-8)
        assert rel.max() <= 1e-7

    batch = (rng.normal(0, 1, (32, 2)), rng.normal(0, 1, (32, 1)), rng.normal(0, 1, (32, 1, 2)))
    lw = LossWeights.from_omega(0.5, 2)
    _, grads = loss_and_gradient(params, batch, lw)
    arrays = list(zip(params.weights, grads.weights)) + list(zip(params.biases, grads.biases))
    flat = [(ai, idx) for ai, (arr, _) in enumerate(arrays) for idx in np.ndindex(arr.shape)]
    for pick in rng.choice(len(flat), size=50, replace=False):
        ai, idx = flat[pick]
        arr, ga = arrays[ai]
        old = arr[idx]
        h = 1e-6 * (1.0 + abs(old))
        arr[idx] = old + h
        up, _ = loss_and_gradient(params, batch, lw)
        arr[idx] = old - h
        dn, _ = loss_and_gradient(params, batch, lw)
        arr[idx] = old
        assert abs((up - dn) / (2 * h) - ga[idx]) / max(abs(ga[idx]), 1e-8) <= 1e-4
    assert time.time() - t0 < 60.0
    _announce(3, "jacobian fd <= 1e-7; loss gradient fd <= 1e-4 on 50 weights")


# ---------------------------------------------------------------------------
# 4. ann / dml equivalence at omega = 0

def test_criterion_4_omega_zero_recovers_classical_training():
    problem = get_problem("cos_toy")
    dataset = generate_dataset(problem, 1024, sampling.RngState(SEED, 1234))
    base = dict(seed=SEED, epochs=13, batch_size=64)  # 13 epochs x 16 steps >= 200
    ann = train(problem, dataset, TrainConfig(mode="ann", **base))
    dml0 = train(problem, dataset, TrainConfig(mode="dml", omega=0.0, **base))
    diver = np.abs(ann.loss_trace[:200] - dml0.loss_trace[:200]).max()
    assert diver <= 1e-15
    for a, b in zip(ann.params.weights + ann.params.biases,
                    dml0.params.weights + dml0.params.biases):
        assert np.array_equal(a, b)
    _announce(4, f"loss traces identical over 200 steps (max divergence {diver:.1e})")


# ---------------------------------------------------------------------------
# 5-7. convergence studies (shared module-scope grids, 10 trials, defaults)

@pytest.fixture(scope="module")
def grids():
    tables = {}
    for pid in ("cos_toy", "lognormal_moment_1d", "chi2_cdf_1d", "cheb_piecewise"):
        t0 = time.time()
        tables[pid] = run_convergence(get_problem(pid), SIZES, TRIALS, SEED, jobs=JOBS)
        print(f"\n[grid] {pid}: {len(tables[pid].rows)} cells in {time.time() - t0:.0f}s")
    return tables


def test_criterion_5_cosine_example(grids):
    table = grids["cos_toy"]
    ann = table.mean_mse("ann", 1 << 16)
    dml = table.mean_mse("dml", 1 << 16)
    assert dml < ann
    assert dml / ann <= 0.5
    _announce(5, f"cos toy J=2^16: dml {dml:.3e} vs ann {ann:.3e} (ratio {dml / ann:.3f})")


def test_criterion_6_lognormal_first_moment(grids):
    table = grids["lognormal_moment_1d"]
    ann = table.mean_mse("ann", 1 << 16)
    dml = table.mean_mse("dml", 1 << 16)
    assert dml / ann <= 0.5
    assert dml <= 1e-3
    _announce(6, f"lognormal J=2^16: dml {dml:.3e} (<= 1e-3), ratio {dml / ann:.3f}")


def test_criterion_7_convergence_trend(grids):
    notes = []
    for pid, table in grids.items():
        dml_means = [table.mean_mse("dml", j) for j in SIZES]
        ann_means = [table.mean_mse("ann", j) for j in SIZES]
        dml_slope = fit_loglog_slope(SIZES, dml_means)
        ann_slope = fit_loglog_slope(SIZES, ann_means)
        assert dml_slope < 0.0, f"{pid}: dml slope {dml_slope:.3f}"
        # ann behavior is recorded, not gated (it may plateau or diverge)
        notes.append(f"{pid}: dml slope {dml_slope:.2f}, ann slope {ann_slope:.2f} (recorded)")
    _announce(7, "; ".join(notes))


# ---------------------------------------------------------------------------
# 8. oracle cross-checks

def test_criterion_8_oracle_cross_checks():
    pts = kronecker_points(100, 2)

    # chi-squared truth vs dense quadrature of the pdf (smooth substitution
    # u = x^{theta/2} handles the integrable endpoint singularity)
    b = 0.01 + 9.99 * pts[:, 0]
    theta = 0.5 + 4.5 * pts[:, 1]
    p2 = get_problem("chi2_cdf_2d")
    truth = ground_truth(p2, np.column_stack([b, theta]))[:, 0]
    for bi, ti, got in zip(b, theta, truth):
        s = ti / 2.0
        val, _ = quad(lambda uu: math.exp(-(uu ** (1.0 / s)) / 2.0), 0.0, bi ** s,
                      epsabs=1e-13, epsrel=1e-12, limit=300)
        ref = val / (s * 2.0 ** s * math.gamma(s))
        assert abs(got - ref) <= 1e-8

    # kou closed form vs dense quadrature of the integrand over [-30, 30]
    kou = get_problem("kou")
    kp = np.column_stack([0.3 + 0.4 * pts[:, 0], 3.0 + 5.0 * pts[:, 1],
                          1.5 + 4.5 * pts[::-1, 0]])
    kt = ground_truth(kou, kp)[:, 0]
    for (pp, e1, e2), got in zip(kp, kt):
        val, _ = quad(lambda xx: (math.exp(2 * xx) - 2 * (math.exp(xx) - 1))
                      * kou_density_and_grads(xx, pp, e1, e2)[0],
                      -30.0, 30.0, epsabs=1e-10, epsrel=1e-10, limit=500, points=[0.0])
        assert abs(got - val) <= 1e-6

    # NIG quadrature oracle: node doubling at least halves the error
    bq = np.array([-2.0, 0.5, 3.5])
    ref = _nig_cdf_quadrature(bq, 1.0, 0.0, 0.0, 1.0)
    from numpy.polynomial.legendre import leggauss
    from diffint.problems import nig_pdf, _NIG_A

    def gl(n):
        t, w = leggauss(n)
        xs = _NIG_A + np.outer(bq - _NIG_A, 0.5 * (t + 1.0))
        return 0.5 * (bq - _NIG_A) * (nig_pdf(xs, 1.0, 0.0, 0.0, 1.0) @ w)

    err_n = np.abs(gl(8) - ref).max()
    err_2n = np.abs(gl(16) - ref).max()
    assert err_n > 0 and err_2n <= 0.5 * err_n

    # piecewise Chebyshev oracle stable under node doubling at its node count
    from diffint.problems import _CHEB_ORACLE_NODES

    thetas = np.column_stack([0.1 + 1.9 * pts[:, 0], -1.0 + 2.0 * pts[:, 1],
                              -1.0 + 2.0 * pts[::-1, 0], -1.0 + 2.0 * pts[::-1, 1]])
    c1 = _piecewise_cheb_coeffs(thetas, 15, nodes=_CHEB_ORACLE_NODES)
    c2 = _piecewise_cheb_coeffs(thetas, 15, nodes=2 * _CHEB_ORACLE_NODES)
    assert np.abs(c1 - c2).max() <= 1e-8
    _announce(8, "chi2 1e-8, kou 1e-6, nig Richardson halving, chebyshev node doubling 1e-8")


# ---------------------------------------------------------------------------
# 9. format golden files

def test_criterion_9_byte_stable_outputs(tmp_path):
    d = str(tmp_path)

    for name in ("a", "b"):
        assert cli_main(["gen", "--problem", "elliptic", "--size", "64", "--seed", "5",
                         "--out", f"{d}/{name}.csv"]) == 0
    assert open(f"{d}/a.csv", "rb").read() == open(f"{d}/b.csv", "rb").read()

    for name in ("a", "b"):
        assert cli_main(["train", "--problem", "cos_toy", "--size", "128", "--mode", "dml",
                         "--seed", "5", "--epochs", "2", "--batch", "64",
                         "--out", f"{d}/{name}.model"]) == 0
    assert open(f"{d}/a.model", "rb").read() == open(f"{d}/b.model", "rb").read()

    for name in ("a", "b"):
        assert cli_main(["converge", "--problem", "cos_toy", "--sizes", "32,64",
                         "--trials", "2", "--seed", "5", "--epochs", "1", "--batch", "32",
                         "--test-size", "32", "--jobs", "2", "--out", f"{d}/{name}.table.csv"]) == 0
    assert open(f"{d}/a.table.csv", "rb").read() == open(f"{d}/b.table.csv", "rb").read()

    emit_plot(f"{d}/a.table.means.csv", f"{d}/a.svg")
    emit_plot(f"{d}/b.table.means.csv", f"{d}/b.svg")
    assert open(f"{d}/a.svg", "rb").read() == open(f"{d}/b.svg", "rb").read()
    _announce(9, "dataset, model, table and plot outputs byte-stable")
