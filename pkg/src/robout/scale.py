"""Robust residual scale, reweighting rules and the conditional-outlier flag rule."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.stats import norm

from .data import PHI_INV_075
from .errors import ContractViolation

#: Phi^{-1}(0.995): two-sided 1% flag threshold on scaled residuals
FLAG_THRESHOLD = 2.5758293035489004
#: sqrt(chi2_{1, 0.975}): distance cutoff of the GS reweighting step
GS_CUTOFF = 2.2414027276049473
#: tail mass beyond +-GS_CUTOFF under the standard normal
GS_TRIM_FRACTION = 0.025

FscHook = Union[float, Callable[[int, int], float], None]


@dataclass(frozen=True)
class ScaleEstimate:
    sigma0: float
    sigma: float
    weights: np.ndarray
    consistency_factor: float
    fsc: float
    raw_sigma: float


@dataclass(frozen=True)
class OutlierReport:
    scaled_residuals: np.ndarray
    flags: np.ndarray
    threshold: float
    flagged_indices: tuple
    degenerate_scale: bool = False

    @property
    def n_flagged(self) -> int:
        return len(self.flagged_indices)


def ceil_fraction(frac: float, n: int) -> int:
    """ceil(frac * n) without spurious round-up from binary fractions (0.9 * 200 etc.)."""
    return int(math.ceil(round(frac * n, 9)))


def initial_scale(residuals) -> float:
    """sqrt(median r^2) / Phi^{-1}(0.75)."""
    r = np.asarray(residuals, dtype=float)
    return float(np.sqrt(np.median(r * r)) / PHI_INV_075)


def consistency_factor(delta: float) -> float:
    """Inflation that makes the RMS of a normal sample trimmed at the
    two-sided ``delta`` tail consistent for the standard deviation."""
    if delta <= 0:
        return 1.0
    if delta >= 1:
        raise ValueError("trim fraction must be below 1")
    q = norm.ppf(1.0 - delta / 2.0)
    v = 1.0 - 2.0 * q * norm.pdf(q) / (2.0 * norm.cdf(q) - 1.0)
    return float(1.0 / math.sqrt(v))


def default_fsc(n: int, n_params: int) -> float:
    """Finite-sample correction hook; identity unless the caller supplies one."""
    return 1.0


def _resolve_fsc(fsc: FscHook, n: int, n_params: int) -> float:
    if fsc is None:
        return default_fsc(n, n_params)
    if callable(fsc):
        return float(fsc(n, n_params))
    return float(fsc)


def _reweighted(r, w, sigma0, delta, fsc, n_params):
    kept = w > 0
    raw = float(np.sqrt(np.sum(r[kept] ** 2) / kept.sum())) if kept.any() else 0.0
    cf = consistency_factor(delta)
    f = _resolve_fsc(fsc, r.size, n_params)
    w.setflags(write=False)
    return ScaleEstimate(sigma0=sigma0, sigma=raw * cf * f, weights=w,
                         consistency_factor=cf, fsc=f, raw_sigma=raw)


def trim_weights(abs_scaled, n_trim: int) -> np.ndarray:
    """0/1 weights dropping the ``n_trim`` largest values.

    Among equal values the higher index is dropped first.
    """
    a = np.asarray(abs_scaled, dtype=float)
    w = np.ones(a.size)
    if n_trim > 0:
        idx = np.arange(a.size)
        order = np.lexsort((-idx, -a))
        w[order[:n_trim]] = 0.0
    return w


def lts_reweight(residuals, sigma0: float, alpha: float, n_params: int = 1,
                 fsc: FscHook = None) -> ScaleEstimate:
    """Zero-weight the ceil(alpha n) largest |r|/sigma0 and rescale the rest.

    ``n_params`` (coefficients including intercept) is only passed to the
    finite-sample correction hook.
    """
    r = np.asarray(residuals, dtype=float)
    if not 0 <= alpha <= 0.5:
        raise ValueError("alpha must lie in [0, 0.5]")
    if sigma0 < 0:
        raise ValueError("sigma0 must be nonnegative")
    if sigma0 == 0 and np.any(r != 0):
        raise ContractViolation("sigma0 is 0 but residuals are not all zero")
    n_trim = ceil_fraction(alpha, r.size)
    scaled = np.abs(r) / sigma0 if sigma0 > 0 else np.zeros_like(r)
    w = trim_weights(scaled, n_trim)
    return _reweighted(r, w, sigma0, n_trim / r.size, fsc, n_params)


def gs_reweight(residuals, scale: float, n_params: int = 1, fsc: FscHook = None) -> ScaleEstimate:
    """Zero-weight residuals whose distance |r|/scale exceeds sqrt(chi2_{1,0.975})."""
    r = np.asarray(residuals, dtype=float)
    if scale < 0:
        raise ValueError("scale must be nonnegative")
    if scale == 0:
        if np.any(r != 0):
            raise ContractViolation("scale is 0 but residuals are not all zero")
        w = np.ones(r.size)
    else:
        w = (np.abs(r) / scale <= GS_CUTOFF).astype(float)
    return _reweighted(r, w, scale, GS_TRIM_FRACTION, fsc, n_params)


def flag_outliers(residuals, sigma: float, threshold: float = FLAG_THRESHOLD) -> OutlierReport:
    """Flag observations whose |r| / sigma exceeds the threshold.

    A zero ``sigma`` flags every nonzero residual and marks the report as
    degenerate.
    """
    r = np.asarray(residuals, dtype=float)
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    degenerate = False
    if sigma > 0:
        scaled = r / sigma
    else:
        degenerate = bool(np.any(r != 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            scaled = np.where(r == 0, 0.0, np.sign(r) * np.inf)
    flags = np.abs(scaled) > threshold
    scaled.setflags(write=False)
    flags.setflags(write=False)
    return OutlierReport(scaled, flags, threshold,
                         tuple(int(i) for i in np.flatnonzero(flags)), degenerate)
