"""Classical fractional processes: fGN/fBM and the generalized Bernoulli process.

Covariance models share one interface (:class:`CovarianceModel`) so the
cumulative-variance engine can treat classical and spin-chain increments
alike. Exact Gaussian samplers (Hosking, Davies-Harte) are included; the
generalized Bernoulli process is analytic only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .trajectory import Trajectory


@dataclass(frozen=True)
class FgnParams:
    sigma2: float = 1.0
    hurst: float = 0.5

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        # H = 1 is admitted for the covariance formula; samplers require H < 1
        if not 0 < self.hurst <= 1:
            raise ValueError(f"Hurst exponent must lie in (0, 1), got {self.hurst}")


@dataclass(frozen=True)
class GbpParams:
    p: float = 0.5
    h: float = 0.75
    c: float = 0.05

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {self.p}")
        if not 0 < self.h <= 1:
            raise ValueError(f"h must lie in (0, 1), got {self.h}")
        if not self.c > 0:
            raise ValueError(f"c must be positive, got {self.c}")

    @property
    def sigma2(self) -> float:
        return self.p * (1.0 - self.p)


@dataclass
class CovarianceModel:
    """Lag -> covariance function of a stationary increment process.

    ``evaluate`` receives an integer array of lags ``n >= 1`` and returns the
    covariances; ``sigma2`` is the lag-0 value. Lags are cached as they are
    requested so repeated sweeps stay O(t).
    """

    kind: str
    sigma2: float
    evaluate: Callable[[np.ndarray], np.ndarray]
    name: str = ""
    _cache: np.ndarray = field(default_factory=lambda: np.empty(0), repr=False)

    def lags(self, n_max: int) -> np.ndarray:
        """Covariances C(1), ..., C(n_max)."""
        have = self._cache.shape[0]
        if n_max > have:
            extra = np.asarray(self.evaluate(np.arange(have + 1, n_max + 1)), dtype=float)
            self._cache = np.concatenate([self._cache, extra])
        return self._cache[:n_max]

    def __call__(self, n):
        n = np.asarray(n)
        if n.ndim == 0:
            return self.sigma2 if n == 0 else float(self.lags(int(n))[-1])
        out = np.empty(n.shape, dtype=float)
        pos = n > 0
        if np.any(pos):
            out[pos] = self.lags(int(n.max()))[n[pos] - 1]
        out[~pos] = self.sigma2
        return out


def fgn_covariance(n, params: FgnParams):
    """Autocovariance of fractional Gaussian noise at integer lag(s) ``n >= 0``."""
    n = np.abs(np.asarray(n, dtype=float))
    h2 = 2.0 * params.hurst
    out = 0.5 * params.sigma2 * (np.abs(n + 1) ** h2 - 2.0 * n**h2 + np.abs(n - 1) ** h2)
    return float(out) if out.ndim == 0 else out


def fgn_covariance_asymptotic(n, params: FgnParams):
    H = params.hurst
    out = params.sigma2 * H * (2 * H - 1) * np.asarray(n, dtype=float) ** (2 * H - 2)
    return float(out) if np.ndim(out) == 0 else out


def gbp_covariance(n, params: GbpParams):
    out = params.c * np.asarray(n, dtype=float) ** (2 * params.h - 2)
    return float(out) if np.ndim(out) == 0 else out


def fgn_model(params: FgnParams) -> CovarianceModel:
    return CovarianceModel(
        "fgn", params.sigma2, lambda n: fgn_covariance(n, params),
        name=f"fgn(H={params.hurst:g},sigma2={params.sigma2:g})",
    )


def gbp_model(params: GbpParams) -> CovarianceModel:
    return CovarianceModel(
        "gbp", params.sigma2, lambda n: gbp_covariance(n, params),
        name=f"gbp(p={params.p:g},h={params.h:g},c={params.c:g})",
    )


def tabulated_model(sigma2: float, values, name: str = "tabulated") -> CovarianceModel:
    """Model backed by a finite table ``values[k-1] = C(k)``."""
    table = np.asarray(values, dtype=float)

    def evaluate(n):
        if n.size and n.max() > table.shape[0]:
            raise ValueError(f"lag {n.max()} beyond tabulated range {table.shape[0]}")
        return table[n - 1]

    return CovarianceModel("tabulated", float(sigma2), evaluate, name=name)


def cumulative_variance_curve(model: CovarianceModel, t_max: int, staggered: bool = False) -> np.ndarray:
    """Var(B_t) for t = 1..t_max from the increment covariance.

    Uses Var(B_t) = sigma2 t + 2 sum_{k=0}^{t-1} S(k) with S(k) = sum_{j<=k} C(j);
    with ``staggered`` the covariance is replaced by (-1)^j C(j).
    """
    if t_max < 1:
        raise ValueError(f"t must be >= 1, got {t_max}")
    c = model.lags(t_max - 1).copy()
    if staggered:
        c[0::2] *= -1.0
    partial = np.concatenate([[0.0], np.cumsum(c)])
    t = np.arange(1, t_max + 1, dtype=float)
    return model.sigma2 * t + 2.0 * np.cumsum(partial)


def cumulative_variance(model: CovarianceModel, t: int, staggered: bool = False) -> float:
    return float(cumulative_variance_curve(model, t, staggered)[-1])


def _rng(seed: int) -> np.random.Generator:
    # counter-based stream: identical draws for identical seeds on every platform
    return np.random.Generator(np.random.Philox(seed))


def _check_sampler_params(params: FgnParams, n: int) -> None:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not params.hurst < 1:
        raise ValueError("exact samplers need H < 1")


def sample_fgn_hosking(params: FgnParams, n: int, seed: int) -> Trajectory:
    """Exact fGN sample by the Hosking (Durbin-Levinson) recursion, O(n^2)."""
    _check_sampler_params(params, n)
    gamma = fgn_covariance(np.arange(n), params)
    z = _rng(seed).standard_normal(n)
    x = np.empty(n)
    v = gamma[0]
    x[0] = np.sqrt(v) * z[0]
    phi = np.empty(0)
    for t in range(1, n):
        k = (gamma[t] - phi @ gamma[t - 1:0:-1]) / v
        phi = np.concatenate([phi - k * phi[::-1], [k]])
        v *= 1.0 - k * k
        if not v > 0:
            raise FloatingPointError(f"innovation variance became {v:g} at step {t}")
        x[t] = phi @ x[t - 1::-1] + np.sqrt(v) * z[t]
    return Trajectory(x, seed=seed, model="fgn", meta={"method": "hosking", "H": params.hurst})


class EmbeddingError(ValueError):
    """Circulant embedding produced a negative eigenvalue."""


def sample_fgn_daviesharte(params: FgnParams, n: int, seed: int) -> Trajectory:
    """Exact fGN sample by circulant embedding (Davies-Harte), O(n log n)."""
    _check_sampler_params(params, n)
    m = 1 << max(1, int(np.ceil(np.log2(max(n, 2)))))
    c = fgn_covariance(np.arange(m + 1), params)
    row = np.concatenate([c, c[-2:0:-1]])
    lam = np.fft.fft(row).real
    floor = -1e-10 * np.abs(lam).max()
    if lam.min() < floor:
        bad = int(np.argmin(lam))
        raise EmbeddingError(f"negative circulant eigenvalue {lam[bad]:g} at index {bad}")
    lam = np.clip(lam, 0.0, None)
    rng = _rng(seed)
    size = 2 * m
    w = rng.standard_normal(size) + 1j * rng.standard_normal(size)
    x = np.fft.fft(np.sqrt(lam / size) * w).real[:n]
    return Trajectory(x, seed=seed, model="fgn", meta={"method": "daviesharte", "H": params.hurst})
