"""Exact covariances of the XX chain (anisotropy zero) and domain-magnetization variances.

The longitudinal covariance is C_z(n) = [(-1)^n - 1] / (2 pi^2 n^2); the
transverse one is a product of Gamma-function ratios. Both feed the generic
cumulative-variance engine and serve as oracles for the tensor-network code.

For even l the uniform z variance has the closed form

    V_l = [psi(l/2 + 1/2) + gamma + 2 ln 2 + (l/2) psi'(l/2 + 1/2)] / pi^2

and the staggered one is W_l = l/2 - V_l.
"""

from __future__ import annotations

import math

import numpy as np

from .classical import CovarianceModel, cumulative_variance_curve
from .specfun import EULER_GAMMA, digamma, trigamma

SINGLE_SITE_VARIANCE = 0.25
# V_l = (ln l + UNIFORM_Z_CONSTANT) / pi^2 - 1 / (6 pi^2 l^2) + O(l^-4)
UNIFORM_Z_CONSTANT = EULER_GAMMA + 1.0 + math.log(2.0)


def cz_exact(n):
    """Longitudinal covariance <S^z_0 S^z_n>; 1/4 at n = 0."""
    n = np.asarray(n)
    nf = n.astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        sign = np.where(n % 2 == 0, 1.0, -1.0)
        out = (sign - 1.0) / (2.0 * math.pi**2 * nf**2)
    out = np.where(n == 0, SINGLE_SITE_VARIANCE, out)
    return float(out) if out.ndim == 0 else out


_log_gamma_ratio_cache = np.zeros(1)  # entry K holds log prod_{k=1}^K Gamma(k)^2 / (Gamma(k-1/2) Gamma(k+1/2))


def _log_ratio_products(k_max: int) -> np.ndarray:
    global _log_gamma_ratio_cache
    have = _log_gamma_ratio_cache.shape[0] - 1
    if k_max > have:
        k = np.arange(have + 1, k_max + 1)
        lg = np.vectorize(math.lgamma)
        terms = 2.0 * lg(k) - lg(k - 0.5) - lg(k + 0.5)
        ext = _log_gamma_ratio_cache[-1] + np.cumsum(terms)
        _log_gamma_ratio_cache = np.concatenate([_log_gamma_ratio_cache, ext])
    return _log_gamma_ratio_cache[: k_max + 1]


def cx_exact(n):
    """Transverse covariance <S^x_0 S^x_n>, evaluated in log-gamma space."""
    n = np.asarray(n, dtype=int)
    if np.any(n < 0):
        raise ValueError("lag must be non-negative")
    logp = _log_ratio_products(int((n.max() + 1) // 2) if n.size else 0)
    mag = 0.25 * np.exp(logp[n // 2] + logp[(n + 1) // 2])
    out = np.where(n % 2 == 0, mag, -mag)
    return float(out) if out.ndim == 0 else out


def exact_xx_z_model() -> CovarianceModel:
    return CovarianceModel("exact_xx_z", SINGLE_SITE_VARIANCE, cz_exact, name="xx-exact-z")


def exact_xx_x_model() -> CovarianceModel:
    return CovarianceModel("exact_xx_x", SINGLE_SITE_VARIANCE, cx_exact, name="xx-exact-x")


def variance_numeric(model: CovarianceModel, l: int, staggered: bool = False) -> float:
    return float(cumulative_variance_curve(model, l, staggered)[-1])


def variance_numeric_curve(model: CovarianceModel, l_max: int, staggered: bool = False) -> np.ndarray:
    """Variances for l = 1..l_max in one O(l_max) sweep."""
    return cumulative_variance_curve(model, l_max, staggered)


def _uniform_z_closed_even(l):
    half = np.asarray(l, dtype=float) / 2.0
    x = half + 0.5
    return (digamma(x) + EULER_GAMMA + 2.0 * math.log(2.0) + half * trigamma(x)) / math.pi**2


def variance_uniform_z_closed(l: int, mode: str = "exact") -> float:
    """<M_z(l)^2> at anisotropy zero.

    ``mode="exact"`` uses the polygamma closed form (even l; odd l is routed
    to the numeric double sum), ``mode="asymptotic"`` the large-l expansion.
    """
    if l < 1:
        raise ValueError(f"l must be >= 1, got {l}")
    if mode == "asymptotic":
        return (math.log(l) + UNIFORM_Z_CONSTANT - 1.0 / (6.0 * l * l)) / math.pi**2
    if mode != "exact":
        raise ValueError(f"unknown mode {mode!r}")
    if l % 2:
        return variance_numeric(exact_xx_z_model(), l)
    return float(_uniform_z_closed_even(l))


def variance_staggered_z_closed(l: int, mode: str = "exact") -> float:
    """<N_z(l)^2> at anisotropy zero; equals l/2 - <M_z(l)^2>."""
    if mode == "exact" and l % 2:
        return variance_numeric(exact_xx_z_model(), l, staggered=True)
    return 0.5 * l - variance_uniform_z_closed(l, mode)


def sum_rule_check(model: CovarianceModel, n_max: int) -> float:
    """<(S^z)^2> + 2 sum_{n<=n_max} C(n); tends to zero for a U(1)-symmetric state."""
    return model.sigma2 + 2.0 * math.fsum(model.lags(n_max))
