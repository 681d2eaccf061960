"""Catalog of parametric-integral problems.

Each problem supplies an input box, a single-draw Monte Carlo label
``y = f(x; inputs)`` whose expectation over the integration draw equals the
target integral, the exact gradient of that label with respect to the
inputs (the draw held fixed), and a ground-truth oracle used only for
testing and evaluation, never for training.

Sampling convention for bounded domains: the integration variable is
``x = a + (b - a) u`` with ``u`` uniform on (0, 1) and the label carries the
``(b - a)`` volume factor, so that ``E_u[y] = int_a^b f``.  Problems whose
measure is not uniform (the lognormal moments) draw a standard normal
instead and omit the volume factor.

Chebyshev-coefficient problems store the halved-first-term convention:
the order-0 label and target are multiplied by 1/2, so the targets are
the coefficients of the pointwise expansion ``f = t_0 + sum_{l>=1} t_l T_l``
(for exp(theta*x): ``t_0 = I_0(theta)``, ``t_l = 2 I_l(theta)``) and labels
stay unbiased for them componentwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special as _sp

from . import sampling
from .fileio import atomic_write_text, fmt
from .specfun import DomainError, bessel_i, bessel_k1, bessel_k1_prime, digamma, ellip_f, gauss_chebyshev, reg_lower_inc_gamma

_LN2 = float(np.log(2.0))


class RejectedDrawError(ValueError):
    """The integration draw produced a non-finite or out-of-support label."""


class OracleError(RuntimeError):
    """A numerical ground-truth oracle failed to reach its tolerance."""


# ---------------------------------------------------------------------------
# containers

@dataclass(frozen=True)
class ProblemSpec:
    """A parametric-integral problem: box, sampling law, labels, oracle."""

    id: str
    input_dim: int
    output_dim: int
    box: tuple  # ((lo, hi), ...) per input coordinate
    noise: str  # "uniform" or "normal"
    constants: dict = field(default_factory=dict)
    _labels: Callable = field(repr=False, compare=False, default=None)
    _truth: Callable = field(repr=False, compare=False, default=None)
    _noise_ok: Callable = field(repr=False, compare=False, default=None)

    def __post_init__(self):
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("problem dimensions must be >= 1")
        if len(self.box) != self.input_dim:
            raise ValueError("box size must match input_dim")
        for lo, hi in self.box:
            if not lo <= hi:
                raise ValueError(f"empty box range [{lo}, {hi}]")


@dataclass(frozen=True)
class LabeledSample:
    """One training sample: inputs (d,), labels (K,), grads (K, d)."""

    inputs: np.ndarray
    labels: np.ndarray
    grads: np.ndarray


@dataclass(frozen=True)
class Dataset:
    """Column-stacked samples: inputs (n, d), labels (n, K), grads (n, K, d)."""

    inputs: np.ndarray
    labels: np.ndarray
    grads: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]


# ---------------------------------------------------------------------------
# reusable density kernels (public operations)

def nig_pdf(x, alpha, beta, mu, delta):
    """Normal inverse Gaussian density.

    f(x) = (alpha delta / pi) exp(delta tau + beta (x - mu)) K1(alpha ups) / ups
    with tau = sqrt(alpha^2 - beta^2), ups = sqrt(delta^2 + (x - mu)^2).
    Requires alpha > 0, |beta| < alpha, delta > 0.
    """
    alpha, beta, mu, delta = (np.asarray(v, float) for v in (alpha, beta, mu, delta))
    if np.any(alpha <= 0.0) or np.any(np.abs(beta) >= alpha) or np.any(delta <= 0.0):
        raise DomainError("nig_pdf requires alpha > 0, |beta| < alpha, delta > 0")
    x = np.asarray(x, float)
    tau = np.sqrt(alpha * alpha - beta * beta)
    ups = np.sqrt(delta * delta + (x - mu) ** 2)
    return (alpha * delta / np.pi) * np.exp(delta * tau + beta * (x - mu)) * bessel_k1(alpha * ups) / ups


def nig_pdf_grads(x, alpha, beta, mu, delta):
    """Partial derivatives of the NIG density: (d_x, d_alpha, d_beta, d_mu, d_delta).

    d_x = beta f + K (x - mu) = -d_mu, with the shared coefficient
    K = (alpha delta / (pi ups^3)) exp(delta tau + beta (x - mu))
        [alpha ups K1'(alpha ups) - K1(alpha ups)].
    """
    alpha, beta, mu, delta = (np.asarray(v, float) for v in (alpha, beta, mu, delta))
    if np.any(alpha <= 0.0) or np.any(np.abs(beta) >= alpha) or np.any(delta <= 0.0):
        raise DomainError("nig_pdf_grads requires alpha > 0, |beta| < alpha, delta > 0")
    x = np.asarray(x, float)
    tau = np.sqrt(alpha * alpha - beta * beta)
    dx_mu = x - mu
    ups = np.sqrt(delta * delta + dx_mu * dx_mu)
    au = alpha * ups
    k1 = bessel_k1(au)
    k1p = bessel_k1_prime(au)
    expf = np.exp(delta * tau + beta * dx_mu)
    f = (alpha * delta / np.pi) * expf * k1 / ups
    kcoef = (alpha * delta / (np.pi * ups ** 3)) * expf * (au * k1p - k1)
    d_x = beta * f + kcoef * dx_mu
    d_alpha = f * (1.0 / alpha + delta * alpha / tau + ups * k1p / k1)
    d_beta = f * (-delta * beta / tau + dx_mu)
    d_delta = f * (1.0 / delta + tau) + delta * kcoef
    return d_x, d_alpha, d_beta, -d_x, d_delta


def kou_density_and_grads(x, p, eta1, eta2):
    """Double-exponential jump density and its parameter partials.

    f(x) = p eta1 e^{-eta1 x} on x >= 0 and (1-p) eta2 e^{eta2 x} on x < 0
    (x = 0 uses the x >= 0 branch).  Returns (f, d_p, d_eta1, d_eta2).
    """
    p, eta1, eta2 = (np.asarray(v, float) for v in (p, eta1, eta2))
    if np.any(p < 0.0) or np.any(p > 1.0) or np.any(eta1 <= 0.0) or np.any(eta2 <= 0.0):
        raise DomainError("kou density requires p in [0,1], eta1 > 0, eta2 > 0")
    x = np.asarray(x, float)
    pos = x >= 0.0
    up = np.exp(-eta1 * np.where(pos, x, 0.0))
    dn = np.exp(eta2 * np.where(pos, 0.0, x))
    f = np.where(pos, p * eta1 * up, (1.0 - p) * eta2 * dn)
    d_p = np.where(pos, eta1 * up, -eta2 * dn)
    d_e1 = np.where(pos, p * up * (1.0 - eta1 * x), 0.0)
    d_e2 = np.where(pos, 0.0, (1.0 - p) * dn * (1.0 + eta2 * x))
    return f, d_p, d_e1, d_e2


def chebyshev_T(l: int, x):
    """Chebyshev polynomial T_l(x) by the three-term recurrence, |x| <= 1."""
    if not 0 <= int(l) <= 64 or int(l) != l:
        raise DomainError("chebyshev_T supports integer orders 0 <= l <= 64")
    xa = np.asarray(x, float)
    if np.any(np.abs(xa) > 1.0):
        raise DomainError("chebyshev_T requires |x| <= 1")
    out = _cheb_T_stack(int(l), xa)[-1]
    return float(out) if np.isscalar(x) or np.asarray(x).ndim == 0 else out


def _cheb_T_stack(L, x):
    """T_0..T_L evaluated at x, shape (L+1,) + x.shape."""
    x = np.asarray(x, float)
    out = np.empty((L + 1,) + x.shape)
    out[0] = 1.0
    if L >= 1:
        out[1] = x
    for l in range(2, L + 1):
        out[l] = 2.0 * x * out[l - 1] - out[l - 2]
    return out


# ---------------------------------------------------------------------------
# per-problem label kernels: (inputs (n, d), draw (n,)) -> (Y (n, K), G (n, K, d))

def _cos_labels(X, u):
    b = X[:, 0]
    x = b * u
    y = b * np.cos(x)
    g = np.cos(x) - b * u * np.sin(x)
    return y[:, None], g[:, None, None]


def _cos_truth(X):
    return np.sin(X[:, [0]])


def _lognormal_parts(m, mu, sigma, z):
    """Label and all three parameter partials of exp(m (mu + sigma z))."""
    y = np.exp(m * (mu + sigma * z))
    return y, (mu + sigma * z) * y, m * y, m * z * y


def _make_lognormal(two_input):
    def labels(X, z):
        if two_input:
            m, sigma = X[:, 0], X[:, 1]
            mu = 0.0
        else:
            m = X[:, 0]
            mu, sigma = 0.0, 1.0
        y, dm, _, dsig = _lognormal_parts(m, mu, sigma, z)
        g = np.stack([dm, dsig], axis=1) if two_input else dm[:, None]
        return y[:, None], g[:, None, :]

    def truth(X):
        if two_input:
            m, sigma = X[:, 0], X[:, 1]
            mu = 0.0
        else:
            m = X[:, 0]
            mu, sigma = 0.0, 1.0
        return np.exp(m * mu + 0.5 * m * m * sigma * sigma)[:, None]

    return labels, truth


def _chi2_pdf(x, theta):
    k = 0.5 * np.asarray(theta, float)
    return np.exp((k - 1.0) * np.log(x) - 0.5 * x - k * _LN2 - _sp.gammaln(k))


def _make_chi2(two_input):
    def labels(X, u):
        b = X[:, 0]
        theta = X[:, 1] if two_input else 1.0
        x = b * u
        f = _chi2_pdf(x, theta)
        y = b * f
        db = 0.5 * (theta - x) * f
        if not two_input:
            return y[:, None], db[:, None, None]
        dtheta = 0.5 * y * (np.log(x) - _LN2 - digamma(0.5 * theta))
        return y[:, None], np.stack([db, dtheta], axis=1)[:, None, :]

    def truth(X):
        b = X[:, 0]
        theta = X[:, 1] if two_input else np.ones_like(b)
        return reg_lower_inc_gamma(0.5 * theta, 0.5 * b)[:, None]

    return labels, truth


_NIG_A = -4.0
_NIG_BASE = (1.0, 0.0, 0.0, 1.0)  # (alpha, beta, mu, delta) for the 1-input case


def _make_nig(five_input):
    def labels(X, u):
        b = X[:, 0]
        if five_input:
            alpha, beta, mu, delta = X[:, 1], X[:, 2], X[:, 3], X[:, 4]
        else:
            alpha, beta, mu, delta = _NIG_BASE
        width = b - _NIG_A
        x = _NIG_A + width * u
        f = nig_pdf(x, alpha, beta, mu, delta)
        d_x, d_alpha, d_beta, d_mu, d_delta = nig_pdf_grads(x, alpha, beta, mu, delta)
        y = width * f
        db = f + width * d_x * u
        if not five_input:
            return y[:, None], db[:, None, None]
        g = np.stack([db, width * d_alpha, width * d_beta, width * d_mu, width * d_delta], axis=1)
        return y[:, None], g[:, None, :]

    def truth(X):
        b = X[:, 0]
        if five_input:
            params = (X[:, 1], X[:, 2], X[:, 3], X[:, 4])
        else:
            params = _NIG_BASE
        return _nig_cdf_quadrature(b, *params)[:, None]

    return labels, truth


_LEGGAUSS_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _leggauss(n):
    if n not in _LEGGAUSS_CACHE:
        _LEGGAUSS_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _LEGGAUSS_CACHE[n]


def _nig_cdf_quadrature(b, alpha, beta, mu, delta, a=_NIG_A, tol=1e-11):
    """int_a^b of the NIG density by Gauss-Legendre with node doubling.

    The density is analytic on the box, so the estimates converge
    spectrally; node counts double until two successive estimates agree
    to ``tol`` absolutely.
    """
    b = np.atleast_1d(np.asarray(b, float))
    params = tuple(np.asarray(v, float)[:, None] if np.ndim(v) else float(v)
                   for v in (alpha, beta, mu, delta))
    width = b - a
    prev = None
    for n in (32, 64, 128, 256, 512, 1024, 2048):
        t, w = _leggauss(n)
        x = a + np.outer(width, 0.5 * (t + 1.0))
        f = nig_pdf(x, *params)
        cur = 0.5 * width * (f @ w)
        if prev is not None:
            err = float(np.max(np.abs(cur - prev)))
            if err <= tol:
                return cur
        prev = cur
    raise OracleError(f"NIG quadrature did not reach {tol:g}; last error estimate {err:g}")


def _make_cheb(pid, order):
    """Chebyshev-coefficient problems share the weighted-label structure.

    Labels: y_l = c (4/pi) f(x) T_l(x) / sqrt(1 - x^2) at x = -1 + 2u, with
    c = 1/2 for l = 0 and 1 otherwise; gradients replace f by df/dtheta_i.
    """
    L = int(order)

    def weights(u):
        x = -1.0 + 2.0 * u
        w = (4.0 / np.pi) * _cheb_T_stack(L, x) / np.sqrt(1.0 - x * x)  # (L+1, n)
        w[0] *= 0.5
        return x, w.T  # (n, L+1)

    if pid == "cheb_exp":

        def labels(X, u):
            theta = X[:, 0]
            x, w = weights(u)
            y = w * np.exp(theta * x)[:, None]
            return y, (x[:, None] * y)[:, :, None]

        def truth(X):
            theta = X[:, 0]
            c = 2.0 * bessel_i(np.arange(L + 1), theta[:, None])
            c[:, 0] *= 0.5
            return c

    else:  # piecewise exponential-quadratic

        def _f_and_partials(x, xi, A, B, C):
            neg = x <= 0.0
            e = np.exp(xi * np.where(neg, x, 0.0))
            f = np.where(neg, e, A * x * x + B * x + C)
            # partials of f wrt (xi, A, B, C); indicators split the branches
            return f, np.stack([
                np.where(neg, x * e, 0.0),
                np.where(neg, 0.0, x * x),
                np.where(neg, 0.0, x),
                np.where(neg, 0.0, 1.0),
            ], axis=1)

        def labels(X, u):
            xi, A, B, C = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
            x, w = weights(u)
            f, parts = _f_and_partials(x, xi, A, B, C)
            y = w * f[:, None]
            return y, w[:, :, None] * parts[:, None, :]

        def truth(X):
            return _piecewise_cheb_coeffs(X, L, nodes=_CHEB_ORACLE_NODES)

    def noise_ok(u):
        x = -1.0 + 2.0 * u
        return 1.0 - x * x >= 1e-12

    return labels, truth, noise_ok


# The piecewise integrand jumps at x = 0, so the Gauss-Chebyshev estimate
# converges at second order only; 65536 nodes keep the rule stable to
# better than 1e-8 under node doubling (true error ~ 2e-9 by Richardson).
_CHEB_ORACLE_NODES = 65536


def _piecewise_cheb_coeffs(X, L, nodes):
    """Halved-first-term Chebyshev targets of the piecewise function by a
    Gauss-Chebyshev rule; stability under node doubling is a tested
    acceptance property.  Points are processed in chunks to bound the
    (points x nodes) workspace."""
    rule = gauss_chebyshev(nodes)
    x = rule.nodes
    T = _cheb_T_stack(L, x)  # (L+1, nodes)
    neg = x <= 0.0
    out = np.empty((X.shape[0], L + 1))
    step = max(1, (1 << 24) // nodes)
    for s in range(0, X.shape[0], step):
        xi, A, B, C = (X[s:s + step, j][:, None] for j in range(4))
        f = np.where(neg, np.exp(xi * np.where(neg, x, 0.0)), A * x * x + B * x + C)
        out[s:s + step] = (2.0 / nodes) * (f @ T.T)
    out[:, 0] *= 0.5
    return out


def _elliptic_labels(X, u):
    b, theta = X[:, 0], X[:, 1]
    x = b * u
    s2 = (theta * np.sin(x)) ** 2
    r = 1.0 - s2
    y = b / np.sqrt(r)
    r32 = r ** 1.5
    db = (r + 0.5 * b * theta * theta * u * np.sin(2.0 * x)) / r32
    dtheta = b * theta * np.sin(x) ** 2 / r32
    return y[:, None], np.stack([db, dtheta], axis=1)[:, None, :]


def _elliptic_truth(X):
    return ellip_f(X[:, 0], X[:, 1])[:, None]


_KOU_A, _KOU_B = -5.0, 5.0


def _kou_labels(X, u):
    p, e1, e2 = X[:, 0], X[:, 1], X[:, 2]
    width = _KOU_B - _KOU_A
    x = _KOU_A + width * u
    payoff = np.exp(2.0 * x) - 2.0 * (np.exp(x) - 1.0)
    f, d_p, d_e1, d_e2 = kou_density_and_grads(x, p, e1, e2)
    y = width * payoff * f
    scale = width * payoff
    g = np.stack([scale * d_p, scale * d_e1, scale * d_e2], axis=1)
    return y[:, None], g[:, None, :]


def _kou_truth(X):
    p, e1, e2 = X[:, 0], X[:, 1], X[:, 2]
    if np.any(e1 <= 2.0):
        raise DomainError("kou closed form requires eta1 > 2")
    val = (p * e1 / (e1 - 2.0) + (1.0 - p) * e2 / (e2 + 2.0)
           - 2.0 * (p * e1 / (e1 - 1.0) + (1.0 - p) * e2 / (e2 + 1.0) - 1.0))
    return val[:, None]


# ---------------------------------------------------------------------------
# registry

PROBLEM_IDS = (
    "cos_toy",
    "lognormal_moment_1d",
    "lognormal_moment_2d",
    "chi2_cdf_1d",
    "chi2_cdf_2d",
    "nig_cdf_1d",
    "nig_cdf_5d",
    "cheb_exp",
    "cheb_piecewise",
    "elliptic",
    "kou",
)

_DEFAULT_CHEB_ORDER = 15


def get_problem(pid: str, order: int | None = None) -> ProblemSpec:
    """Build a catalog problem by id.

    ``order`` sets the highest Chebyshev coefficient L for the two
    coefficient problems (default 15, i.e. 16 outputs) and is rejected
    elsewhere.
    """
    if pid not in PROBLEM_IDS:
        raise KeyError(f"unknown problem {pid!r}; known: {', '.join(PROBLEM_IDS)}")
    if order is not None and not pid.startswith("cheb_"):
        raise ValueError("order applies only to the Chebyshev problems")

    if pid == "cos_toy":
        return ProblemSpec(pid, 1, 1, ((0.01, np.pi),), "uniform", {"a": 0.0},
                           _cos_labels, _cos_truth)
    if pid == "lognormal_moment_1d":
        labels, truth = _make_lognormal(two_input=False)
        return ProblemSpec(pid, 1, 1, ((-1.0, 1.0),), "normal",
                           {"mu": 0.0, "sigma": 1.0}, labels, truth)
    if pid == "lognormal_moment_2d":
        labels, truth = _make_lognormal(two_input=True)
        return ProblemSpec(pid, 2, 1, ((-2.0, 2.0), (0.0, 0.5)), "normal",
                           {"mu": 0.0}, labels, truth)
    if pid == "chi2_cdf_1d":
        labels, truth = _make_chi2(two_input=False)
        return ProblemSpec(pid, 1, 1, ((0.01, 10.0),), "uniform",
                           {"a": 0.0, "theta": 1.0}, labels, truth)
    if pid == "chi2_cdf_2d":
        labels, truth = _make_chi2(two_input=True)
        return ProblemSpec(pid, 2, 1, ((0.01, 10.0), (0.5, 5.0)), "uniform",
                           {"a": 0.0}, labels, truth)
    if pid == "nig_cdf_1d":
        labels, truth = _make_nig(five_input=False)
        return ProblemSpec(pid, 1, 1, ((-3.99, 4.0),), "uniform",
                           {"a": _NIG_A, "alpha": 1.0, "beta": 0.0, "mu": 0.0, "delta": 1.0},
                           labels, truth)
    if pid == "nig_cdf_5d":
        labels, truth = _make_nig(five_input=True)
        box = ((-3.99, 4.0), (0.75, 1.0), (-0.25, 0.25), (-0.25, 0.25), (0.75, 1.0))
        return ProblemSpec(pid, 5, 1, box, "uniform", {"a": _NIG_A}, labels, truth)
    if pid in ("cheb_exp", "cheb_piecewise"):
        L = _DEFAULT_CHEB_ORDER if order is None else int(order)
        if not 0 <= L <= 64:
            raise ValueError("Chebyshev order must lie in [0, 64]")
        labels, truth, noise_ok = _make_cheb(pid, L)
        if pid == "cheb_exp":
            return ProblemSpec(pid, 1, L + 1, ((-1.0, 1.0),), "uniform",
                               {"order": L}, labels, truth, noise_ok)
        box = ((0.1, 2.0), (-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0))
        return ProblemSpec(pid, 4, L + 1, box, "uniform", {"order": L},
                           labels, truth, noise_ok)
    if pid == "elliptic":
        return ProblemSpec(pid, 2, 1, ((0.01, np.pi / 2), (0.0, 0.99)), "uniform",
                           {"a": 0.0}, _elliptic_labels, _elliptic_truth)
    # kou
    return ProblemSpec(pid, 3, 1, ((0.3, 0.7), (3.0, 8.0), (1.5, 6.0)), "uniform",
                       {"a": _KOU_A, "b": _KOU_B}, _kou_labels, _kou_truth)


# ---------------------------------------------------------------------------
# public operations

def labels_and_grads(problem: ProblemSpec, inputs: np.ndarray, noise: np.ndarray):
    """Vectorized labels and input-gradients: (n, d), (n,) -> (n, K), (n, K, d)."""
    inputs = np.atleast_2d(np.asarray(inputs, float))
    noise = np.atleast_1d(np.asarray(noise, float))
    if inputs.shape != (noise.shape[0], problem.input_dim):
        raise ValueError("inputs must have shape (n, input_dim) matching the draws")
    return problem._labels(inputs, noise)


def label_and_grad(problem: ProblemSpec, inputs, noise: float) -> LabeledSample:
    """Single-sample label and gradient; rejects invalid or non-finite draws."""
    inputs = np.asarray(inputs, float).reshape(1, -1)
    u = np.asarray([noise], float)
    if problem._noise_ok is not None and not bool(problem._noise_ok(u)[0]):
        raise RejectedDrawError(f"draw {noise!r} is outside the usable support")
    y, g = labels_and_grads(problem, inputs, u)
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(g))):
        raise RejectedDrawError(f"draw {noise!r} produced a non-finite label")
    return LabeledSample(inputs[0], y[0], g[0])


def ground_truth(problem: ProblemSpec, inputs) -> np.ndarray:
    """Oracle values of the target integral(s) at the given inputs."""
    arr = np.asarray(inputs, float)
    single = arr.ndim == 1
    out = problem._truth(np.atleast_2d(arr))
    return out[0] if single else out


def _draw_noise(problem: ProblemSpec, state: sampling.RngState, n: int) -> np.ndarray:
    if problem.noise == "normal":
        return sampling.std_normal(state, n)
    u = sampling.open_uniform01(state, n)
    if problem._noise_ok is not None:
        bad = ~problem._noise_ok(u)
        while np.any(bad):
            u[bad] = sampling.open_uniform01(state, int(bad.sum()))
            bad = ~problem._noise_ok(u)
    return u


def generate_dataset(problem: ProblemSpec, size: int, state: sampling.RngState) -> Dataset:
    """Sample inputs and draws, and build the labeled training set.

    Rows whose label or gradient comes out non-finite (possible only on a
    measure-zero set of draws) are redrawn rather than returned.
    """
    if size < 1:
        raise ValueError("size must be >= 1")
    inputs = sampling.sample_inputs(problem, state, size)
    noise = _draw_noise(problem, state, size)
    y, g = labels_and_grads(problem, inputs, noise)
    for _ in range(64):
        bad = ~(np.all(np.isfinite(y), axis=1) & np.all(np.isfinite(g), axis=(1, 2)))
        if not np.any(bad):
            return Dataset(inputs, y, g)
        idx = np.flatnonzero(bad)
        noise[idx] = _draw_noise(problem, state, idx.size)
        y[idx], g[idx] = labels_and_grads(problem, inputs[idx], noise[idx])
    raise RejectedDrawError("could not obtain finite labels after 64 redraws")


# ---------------------------------------------------------------------------
# dataset file format

def dataset_header(input_dim: int, output_dim: int) -> str:
    cols = [f"in_{i}" for i in range(input_dim)]
    cols += [f"y_{k}" for k in range(output_dim)]
    cols += [f"g_{k}_{i}" for k in range(output_dim) for i in range(input_dim)]
    return ",".join(cols)


def write_dataset(path: str, dataset: Dataset) -> None:
    """Comma-separated text, one sample per line, 17 significant digits."""
    n, d = dataset.inputs.shape
    k = dataset.labels.shape[1]
    lines = [dataset_header(d, k)]
    flat = np.hstack([dataset.inputs, dataset.labels, dataset.grads.reshape(n, k * d)])
    for row in flat:
        lines.append(",".join(fmt(v) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_dataset(path: str) -> Dataset:
    with open(path, "r") as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    d = sum(1 for c in header if c.startswith("in_"))
    k = sum(1 for c in header if c.startswith("y_"))
    if data.shape[1] != d + k + k * d:
        raise ValueError(f"malformed dataset file {path!r}")
    return Dataset(data[:, :d], data[:, d:d + k], data[:, d + k:].reshape(-1, k, d))
