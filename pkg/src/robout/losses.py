"""Huber, check (quantile) and Tukey biweight losses with their psi functions.

All functions are vectorized: ``t`` may be a scalar or an array, and the
result has the same shape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HUBER = "huber"
QUANTILE = "quantile"
TUKEY = "tukey_biweight"
KINDS = (HUBER, QUANTILE, TUKEY)

HUBER_TUNING = 1.345
#: biweight cutoff giving a 50% breakdown M-scale with b = max(rho) / 2
BIWEIGHT_S_TUNING = 1.547
#: biweight cutoff for the 95%-efficient M-step
BIWEIGHT_MM_TUNING = 4.685


@dataclass(frozen=True)
class LossSpec:
    kind: str
    tuning: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if not self.tuning > 0:
            raise ValueError("loss tuning must be positive")
        if self.kind == QUANTILE and not self.tuning < 1:
            raise ValueError("quantile level must lie in (0, 1)")

    @classmethod
    def huber(cls, tuning=HUBER_TUNING):
        return cls(HUBER, tuning)

    @classmethod
    def quantile(cls, tau=0.5):
        return cls(QUANTILE, tau)

    @classmethod
    def tukey(cls, c=BIWEIGHT_MM_TUNING):
        return cls(TUKEY, c)


def _out(x, t):
    return x if np.ndim(t) else float(x)


def huber_loss(t, k):
    t = np.asarray(t, dtype=float)
    a = np.abs(t)
    return np.where(a <= k, 0.5 * t * t, k * a - 0.5 * k * k)


def check_loss(t, tau):
    t = np.asarray(t, dtype=float)
    return t * (tau - (t < 0))


def biweight_rho(t, c):
    t = np.asarray(t, dtype=float)
    u = np.minimum((t / c) ** 2, 1.0)
    return (c * c / 6.0) * (1.0 - (1.0 - u) ** 3)


def biweight_psi(t, c):
    t = np.asarray(t, dtype=float)
    u = (t / c) ** 2
    return np.where(u <= 1.0, t * (1.0 - u) ** 2, 0.0)


def biweight_weight(t, c):
    """psi(t) / t, continuous at 0 (value 1)."""
    t = np.asarray(t, dtype=float)
    u = (t / c) ** 2
    return np.where(u <= 1.0, (1.0 - u) ** 2, 0.0)


def loss_value(spec: LossSpec, t):
    if spec.kind == HUBER:
        v = huber_loss(t, spec.tuning)
    elif spec.kind == QUANTILE:
        v = check_loss(t, spec.tuning)
    else:
        v = biweight_rho(t, spec.tuning)
    return _out(v, t)


def psi_value(spec: LossSpec, t):
    """Derivative of :func:`loss_value`.

    At the quantile kink the midpoint subgradient ``tau - 1/2`` is returned.
    """
    ta = np.asarray(t, dtype=float)
    if spec.kind == HUBER:
        v = np.clip(ta, -spec.tuning, spec.tuning)
    elif spec.kind == QUANTILE:
        tau = spec.tuning
        v = np.where(ta < 0, tau - 1.0, np.where(ta > 0, tau, tau - 0.5))
    else:
        v = biweight_psi(ta, spec.tuning)
    return _out(v, t)


def max_rho(spec: LossSpec) -> float:
    """Supremum of the loss (finite only for the biweight)."""
    if spec.kind == TUKEY:
        return spec.tuning**2 / 6.0
    return float("inf")
