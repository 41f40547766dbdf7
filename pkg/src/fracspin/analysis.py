"""Variance curves, Hurst-exponent fits and the anisotropy/exponent relations.

A variance curve is Var(l) on an increasing grid of window lengths, either
analytic (from a covariance model) or sampled (from +-1 trajectories). Fits
use least squares on (ln l, ln Var) and compare against a logarithmic model
Var = a + b ln l.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .classical import CovarianceModel, cumulative_variance_curve

MIN_WINDOWS = 30
MIN_FIT_POINTS = 8
# a pure logarithm fitted by a power law gives 2H ~ 1/(ln l + const); over
# l in [10^2, 10^3] that is 0.1-0.2, so the guard must sit above it
LOG_GUARD_2H = 0.5


@dataclass
class VarianceCurve:
    lengths: np.ndarray
    values: np.ndarray
    direction: str = "z"
    mode: str = "uniform"
    source: str = "analytic"
    n_windows: np.ndarray | None = None
    stderr: np.ndarray | None = None
    flagged: np.ndarray | None = None

    def __post_init__(self):
        self.lengths = np.asarray(self.lengths, dtype=int)
        self.values = np.asarray(self.values, dtype=float)
        if self.lengths.shape != self.values.shape:
            raise ValueError("lengths and values differ in shape")
        if np.any(np.diff(self.lengths) <= 0):
            raise ValueError("lengths must be strictly increasing")

    def to_csv(self, path) -> None:
        cols = ["l", "variance"]
        rows = [self.lengths, self.values]
        if self.stderr is not None:
            cols += ["stderr", "n_windows", "flagged"]
            rows += [self.stderr, self.n_windows, self.flagged.astype(int)]
        head = f"# version=1 direction={self.direction} mode={self.mode} source={self.source}\n"
        lines = [",".join(cols)]
        for vals in zip(*rows):
            lines.append(",".join(repr(float(v)) if isinstance(v, float | np.floating) else str(v) for v in vals))
        Path(path).write_text(head + "\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path) -> "VarianceCurve":
        text = Path(path).read_text().splitlines()
        meta = {}
        if text and text[0].startswith("#"):
            for tok in text[0].lstrip("#").split():
                k, _, v = tok.partition("=")
                meta[k] = v
            text = text[1:]
        if meta.get("version", "1") != "1":
            raise ValueError(f"{path}: unsupported curve version {meta['version']}")
        cols = text[0].split(",")
        if cols[:2] != ["l", "variance"]:
            raise ValueError(f"{path}: expected columns l,variance")
        data = np.array([[float(x) for x in row.split(",")] for row in text[1:] if row.strip()])
        kw = {}
        if "stderr" in cols:
            kw = dict(
                stderr=data[:, cols.index("stderr")],
                n_windows=data[:, cols.index("n_windows")].astype(int),
                flagged=data[:, cols.index("flagged")].astype(bool),
            )
        return cls(
            data[:, 0].astype(int), data[:, 1],
            direction=meta.get("direction", "z"), mode=meta.get("mode", "uniform"),
            source=meta.get("source", "analytic"), **kw,
        )


@dataclass
class HurstFit:
    exponent_2H: float
    hurst: float | None
    intercept: float
    window: tuple[int, int]
    r2: float
    log_model_preferred: bool
    n_points: int
    log_coefficients: tuple[float, float] = (float("nan"), float("nan"))

    def to_json(self, **context) -> str:
        out = dict(context)
        out.update(
            H=self.hurst,
            two_H=self.exponent_2H,
            intercept=self.intercept,
            r2=self.r2,
            window=list(self.window),
            log_model_preferred=self.log_model_preferred,
            n_points=self.n_points,
        )
        return json.dumps(out, indent=2, sort_keys=True)


def log_grid(l_min: int, l_max: int, points: int = 40) -> np.ndarray:
    return np.unique(np.round(np.geomspace(l_min, l_max, points)).astype(int))


def analytic_curve(model: CovarianceModel, l_max: int, staggered: bool = False, lengths=None, direction: str = "z") -> VarianceCurve:
    full = cumulative_variance_curve(model, l_max, staggered)
    if lengths is None:
        lengths = np.arange(1, l_max + 1)
    lengths = np.asarray(lengths, dtype=int)
    return VarianceCurve(
        lengths, full[lengths - 1], direction=direction,
        mode="staggered" if staggered else "uniform", source="analytic",
    )


def _window_sums(spins: np.ndarray, l: int, offset: int) -> np.ndarray:
    usable = (spins.shape[0] - offset) // l
    if usable <= 0:
        return np.empty(0)
    return spins[offset: offset + usable * l].reshape(usable, l).sum(axis=1)


def variance_curve_from_samples(trajectories, mode: str, l_grid, direction: str | None = None) -> VarianceCurve:
    """Empirical Var(M(l)) or Var(N(l)) from non-overlapping windows.

    Each window length uses both offsets (0 and 1) of the two-site unit cell;
    the reported variance is their average and the standard error comes from
    the offset-0 windows alone. Points with fewer than ``MIN_WINDOWS``
    windows are kept but flagged.
    """
    if mode not in ("uniform", "staggered"):
        raise ValueError(f"mode must be 'uniform' or 'staggered', got {mode!r}")
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("no trajectories")
    bases = {t.basis for t in trajectories}
    if len(bases) > 1:
        raise ValueError(f"trajectories mix bases {sorted(map(str, bases))}")
    basis = bases.pop()
    if direction is not None and basis is not None and direction != basis:
        raise ValueError(f"direction {direction} requested from {basis}-basis trajectories")
    series = []
    for t in trajectories:
        s = 0.5 * np.asarray(t.values, dtype=float)
        if mode == "staggered":
            s = s.copy()
            s[0::2] *= -1.0  # weight (-1)^k with k counted from 1
        series.append(s)
    l_grid = np.asarray(l_grid, dtype=int)
    values, errs, counts = [], [], []
    for l in l_grid:
        per_offset = []
        err = float("nan")
        count = 0
        for offset in (0, 1):
            sums = np.concatenate([_window_sums(s, int(l), offset) for s in series])
            if sums.size < 2:
                per_offset.append(np.nan)
                continue
            dev2 = (sums - sums.mean()) ** 2
            per_offset.append(dev2.sum() / (sums.size - 1))
            if offset == 0:
                count = sums.size
                err = float(dev2.std(ddof=1) / math.sqrt(sums.size))
        values.append(float(np.nanmean(per_offset)) if np.any(np.isfinite(per_offset)) else float("nan"))
        errs.append(err)
        counts.append(count)
    counts = np.array(counts)
    return VarianceCurve(
        l_grid, np.array(values), direction=basis or (direction or "z"), mode=mode, source="sampled",
        n_windows=counts, stderr=np.array(errs), flagged=counts < MIN_WINDOWS,
    )


def _lstsq(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float]:
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(intercept), r2


def fit_hurst(curve: VarianceCurve, window: tuple[int, int] | None = None) -> HurstFit:
    """Power-law fit of Var(l) with a logarithmic alternative.

    The default window is [l_max/10, l_max]. The log model is preferred when
    its relative residuals (in linear space) are smaller than those of the
    power law and the fitted 2H is below ``LOG_GUARD_2H``.
    """
    l = curve.lengths
    if window is None:
        window = (max(1, int(l.max()) // 10), int(l.max()))
    sel = (l >= window[0]) & (l <= window[1]) & np.isfinite(curve.values)
    if np.count_nonzero(sel) < MIN_FIT_POINTS:
        raise ValueError(f"fit window {window} holds {np.count_nonzero(sel)} points; need >= {MIN_FIT_POINTS}")
    lw = l[sel].astype(float)
    v = curve.values[sel]
    if np.any(v <= 0):
        raise ValueError("non-positive variance inside the fit window")
    ln_l = np.log(lw)
    slope, intercept, r2 = _lstsq(ln_l, np.log(v))
    power_rel = np.sum(((v - np.exp(intercept) * lw**slope) / v) ** 2)
    b, a = np.polyfit(ln_l, v, 1)
    log_rel = np.sum(((v - a - b * ln_l) / v) ** 2)
    log_pref = bool(log_rel < power_rel and slope < LOG_GUARD_2H)
    return HurstFit(
        exponent_2H=slope,
        hurst=None if log_pref else 0.5 * slope,
        intercept=intercept,
        window=(int(window[0]), int(window[1])),
        r2=r2,
        log_model_preferred=log_pref,
        n_points=int(np.count_nonzero(sel)),
        log_coefficients=(float(a), float(b)),
    )


# theory -----------------------------------------------------------------------


def _check_delta(delta: float) -> None:
    if not -1.0 <= delta <= 1.0:
        raise ValueError(f"anisotropy must lie in [-1, 1], got {delta}")


def eta_from_delta(delta: float) -> float:
    """eta with delta = -cos(pi eta)."""
    _check_delta(delta)
    return math.acos(-delta) / math.pi


def theoretical_hurst_nx(delta: float) -> float:
    return 1.0 - eta_from_delta(delta) / 2.0


def predicted_scaling_table(delta: float) -> dict:
    """Leading large-l behaviour of the four domain-magnetization variances."""
    _check_delta(delta)
    exponent = 2.0 - eta_from_delta(delta)
    return {
        "M_z": {"law": "log", "exponent": 0.0},
        "N_z": {"law": "linear", "exponent": 1.0},
        "M_x": {"law": "log", "exponent": 0.0} if delta == 1.0 else {"law": "linear", "exponent": 1.0},
        "N_x": {"law": "power", "exponent": exponent},
    }


@dataclass
class AsymptoticVarianceModel:
    """Large-l variance for C(l) = A l^-zeta + (-1)^l Atilde l^-xi.

    <M^2> = B l^(2-zeta) + Btilde l^-xi + C l and
    <N^2> = D l^-zeta + Dtilde l^(2-xi) + F l; coefficients are fitted.
    """

    zeta: float
    xi: float
    A: float = float("nan")
    Atilde: float = float("nan")
    B: float = float("nan")
    Btilde: float = float("nan")
    C: float = float("nan")
    D: float = float("nan")
    Dtilde: float = float("nan")
    F: float = float("nan")
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for e in (self.zeta, self.xi):
            if e in (1.0, 2.0):
                raise ValueError(f"exponent {e} is a resonant case; the expansion does not apply")

    def uniform(self, l):
        l = np.asarray(l, dtype=float)
        return self.B * l ** (2 - self.zeta) + self.Btilde * l ** (-self.xi) + self.C * l

    def staggered(self, l):
        l = np.asarray(l, dtype=float)
        return self.D * l ** (-self.zeta) + self.Dtilde * l ** (2 - self.xi) + self.F * l

    def fit(self, curve: VarianceCurve, window: tuple[int, int] | None = None) -> "AsymptoticVarianceModel":
        """Least-squares coefficients for one curve (uniform -> B, Btilde, C; staggered -> D, Dtilde, F)."""
        l = curve.lengths.astype(float)
        sel = np.ones_like(l, dtype=bool) if window is None else (l >= window[0]) & (l <= window[1])
        l, v = l[sel], curve.values[sel]
        if curve.mode == "uniform":
            basis = np.column_stack([l ** (2 - self.zeta), l ** (-self.xi), l])
        else:
            basis = np.column_stack([l ** (-self.zeta), l ** (2 - self.xi), l])
        coef, *_ = np.linalg.lstsq(basis / v[:, None], np.ones_like(v), rcond=None)
        if curve.mode == "uniform":
            self.B, self.Btilde, self.C = map(float, coef)
        else:
            self.D, self.Dtilde, self.F = map(float, coef)
        return self

    def as_dict(self) -> dict:
        return asdict(self)


def mps_covariance_model(mps, axis: str, n_max: int) -> CovarianceModel:
    """Tabulated connected covariance of an infinite MPS up to lag ``n_max``."""
    from .classical import tabulated_model
    from .itebd import SPIN_OPERATORS, correlators, site_expectation

    means = site_expectation(mps, SPIN_OPERATORS[axis])
    sigma2 = 0.25 - 0.5 * (means[0] ** 2 + means[1] ** 2)
    return tabulated_model(sigma2, correlators(mps, axis, n_max), name=f"imps-{axis}")


def mps_variance_curve(mps, axis: str, staggered: bool, l_max: int, lengths=None) -> VarianceCurve:
    model = mps_covariance_model(mps, axis, max(1, l_max - 1))
    return analytic_curve(model, l_max, staggered, lengths, direction=axis)
