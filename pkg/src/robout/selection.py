"""Penalized robust regression paths (Huber / median loss) and top-K support extraction.

The solver is cyclic coordinate descent where each coordinate is minimized
exactly by a safeguarded semismooth Newton iteration on the one-dimensional
subproblem. Both losses are handled as a scaled, possibly asymmetric Huber
function ``s * H`` whose psi is ``s * clip(t, lo, hi)``:

* Huber with transition ``k``:  ``s = 1``, ``lo = -k``, ``hi = k``.
* check loss at level ``tau`` smoothed over a band of width ``w``:
  ``s = 1/w``, ``lo = (tau - 1) w``, ``hi = tau w``. This tends to the exact
  check function as ``w -> 0``.

The objective at penalty ``lam`` is::

    (1/n) sum_i rho(y_i - b0 - x_i'b) + lam * (a |b|_1 + (1 - a)/2 |b|_2^2)

with the intercept ``b0`` left unpenalized.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .data import Dataset
from .errors import SelectionError
from .losses import HUBER, QUANTILE, LossSpec

log = logging.getLogger(__name__)

#: width of the quadratic band used to smooth the check loss
QUANTILE_SMOOTHING = 0.01


# --------------------------------------------------------------------------
# numba kernels


@njit(cache=True)
def _h_and_slope(x, r, delta, l2, b, off, lo, hi, s, n):
    # derivative of the 1-D objective at coefficient b, shifted by off
    g = 0.0
    dg = 0.0
    for i in range(n):
        xi = x[i]
        t = r[i] - xi * delta
        if t > hi:
            g += s * hi * xi
        elif t < lo:
            g += s * lo * xi
        else:
            g += s * t * xi
            dg += s * xi * xi
    return -g / n + l2 * b + off, dg / n + l2


@njit(cache=True)
def _root(x, r, bj, l2, off, lo, hi, s, n, left, right, start):
    """Root of the increasing piecewise-linear h(b) on (left, right).

    ``left``/``right`` may be infinite; h(left) < 0 < h(right) is assumed.
    """
    b = start
    if not (left < b < right):
        if np.isfinite(left) and np.isfinite(right):
            b = 0.5 * (left + right)
        elif np.isfinite(left):
            b = left
        else:
            b = right
    for _ in range(200):
        h, dh = _h_and_slope(x, r, b - bj, l2, b, off, lo, hi, s, n)
        if h == 0.0:
            return b
        if h < 0.0:
            left = b
        else:
            right = b
        cand = np.nan
        if dh > 0.0:
            cand = b - h / dh
        if not (left < cand < right):
            if np.isfinite(left) and np.isfinite(right):
                cand = 0.5 * (left + right)
            elif np.isfinite(left):
                cand = b + max(1.0, 2.0 * abs(b))
            else:
                cand = b - max(1.0, 2.0 * abs(b))
        if abs(cand - b) <= 1e-15 * (1.0 + abs(b)):
            return cand
        b = cand
        if np.isfinite(left) and np.isfinite(right) and right - left <= 1e-15 * (1.0 + abs(b)):
            return b
    return b


@njit(cache=True)
def _coord_update(x, r, bj, l1, l2, lo, hi, s, n):
    """Exact minimizer over b of (1/n) sum rho(r_i - x_i (b - bj)) + l1|b| + l2 b^2 / 2."""
    g0, _ = _h_and_slope(x, r, -bj, l2, 0.0, 0.0, lo, hi, s, n)
    if abs(g0) <= l1 * (1.0 + 1e-12):
        return 0.0
    if g0 < -l1:
        # solution positive: h(b) = g(b) + l1, h(0) < 0
        return _root(x, r, bj, l2, l1, lo, hi, s, n, 0.0, np.inf, bj)
    return _root(x, r, bj, l2, -l1, lo, hi, s, n, -np.inf, 0.0, bj)


@njit(cache=True)
def _intercept_update(ones, r, b0, lo, hi, s, n):
    g0, _ = _h_and_slope(ones, r, 0.0, 0.0, 0.0, 0.0, lo, hi, s, n)
    if g0 == 0.0:
        return b0
    if g0 < 0.0:
        return _root(ones, r, b0, 0.0, 0.0, lo, hi, s, n, b0, np.inf, b0)
    return _root(ones, r, b0, 0.0, 0.0, lo, hi, s, n, -np.inf, b0, b0)


@njit(cache=True)
def _sweep(X, r, beta, b0, ones, coords, l1, l2, lo, hi, s):
    n = X.shape[0]
    nb0 = _intercept_update(ones, r, b0, lo, hi, s, n)
    maxd = abs(nb0 - b0)
    if nb0 != b0:
        d = nb0 - b0
        for i in range(n):
            r[i] -= d
    for j in coords:
        x = X[:, j]
        old = beta[j]
        new = _coord_update(x, r, old, l1, l2, lo, hi, s, n)
        if new != old:
            d = new - old
            for i in range(n):
                r[i] -= x[i] * d
            beta[j] = new
            if abs(d) > maxd:
                maxd = abs(d)
    return nb0, maxd


@njit(cache=True)
def _rho_sum(r, lo, hi, s):
    acc = 0.0
    for i in range(r.shape[0]):
        t = r[i]
        if t > hi:
            acc += hi * t - 0.5 * hi * hi
        elif t < lo:
            acc += lo * t - 0.5 * lo * lo
        else:
            acc += 0.5 * t * t
    return s * acc


@njit(cache=True)
def _newton_step(X, r, beta, b0, act, l1, l2, lo, hi, s):
    """Damped semismooth Newton step on (intercept, active coefficients).

    Signs of the active coefficients are held fixed: the step is truncated
    where a coefficient would cross zero. Returns the new intercept.
    """
    n = X.shape[0]
    q = act.shape[0] + 1
    Zd = np.empty((n, q))
    Zd[:, 0] = 1.0
    for k in range(q - 1):
        Zd[:, k + 1] = X[:, act[k]]
    psi = np.empty(n)
    dmask = np.zeros(n)
    for i in range(n):
        t = r[i]
        if t > hi:
            psi[i] = s * hi
        elif t < lo:
            psi[i] = s * lo
        else:
            psi[i] = s * t
            dmask[i] = s
    g = -(Zd.T @ psi) / n
    H = (Zd.T * dmask) @ Zd / n
    for k in range(1, q):
        bk = beta[act[k - 1]]
        g[k] += l1 * np.sign(bk) + l2 * bk
        H[k, k] += l2
    for k in range(q):
        H[k, k] += 1e-10 * (1.0 + H[k, k])
    d = np.linalg.solve(H, -g)
    slope = g @ d
    if not slope < 0.0:
        return b0
    tmax = 1.0
    for k in range(1, q):
        bk = beta[act[k - 1]]
        if bk * d[k] < 0.0:
            tk = -bk / d[k]
            if tk < tmax:
                tmax = tk
    u = Zd @ d
    pen0 = 0.0
    for k in range(1, q):
        bk = beta[act[k - 1]]
        pen0 += l1 * abs(bk) + 0.5 * l2 * bk * bk
    f0 = _rho_sum(r, lo, hi, s) / n + pen0
    t = tmax
    for _ in range(40):
        pen = 0.0
        for k in range(1, q):
            bk = beta[act[k - 1]] + t * d[k]
            pen += l1 * abs(bk) + 0.5 * l2 * bk * bk
        f = _rho_sum(r - t * u, lo, hi, s) / n + pen
        if f <= f0 + 1e-4 * t * slope:
            for i in range(n):
                r[i] -= t * u[i]
            for k in range(1, q):
                j = act[k - 1]
                if t == tmax and beta[j] * (beta[j] + t * d[k]) <= 0.0:
                    # landed on zero: remove the residual effect of the rounding
                    r += X[:, j] * (beta[j] + t * d[k])
                    beta[j] = 0.0
                else:
                    beta[j] += t * d[k]
            return b0 + t * d[0]
        t *= 0.5
    return b0


@njit(cache=True)
def _cd_path(X, y, lambdas, enet_alpha, lo, hi, s, eligible, b0_init, tol, max_sweeps, stop_at):
    n, p = X.shape
    L = lambdas.shape[0]
    coefs = np.zeros((L, p))
    icpt = np.zeros(L)
    sweeps = np.zeros(L, dtype=np.int64)
    conv = np.zeros(L, dtype=np.bool_)
    warm_b0 = np.zeros(L)
    warm_beta = np.zeros((L, p))
    beta = np.zeros(p)
    b0 = b0_init
    r = y - b0
    ones = np.ones(n)
    all_coords = np.flatnonzero(eligible)
    nfit = 0
    for l in range(L):
        warm_b0[l] = b0
        warm_beta[l, :] = beta
        lam = lambdas[l]
        l1 = lam * enet_alpha
        l2 = lam * (1.0 - enet_alpha)
        total = 0
        done = False
        while total < max_sweeps:
            b0, maxd = _sweep(X, r, beta, b0, ones, all_coords, l1, l2, lo, hi, s)
            total += 1
            if maxd <= tol:
                done = True
                break
            act = np.flatnonzero(beta != 0.0)
            while total < max_sweeps:
                b0, maxd = _sweep(X, r, beta, b0, ones, act, l1, l2, lo, hi, s)
                total += 1
                if maxd <= tol:
                    break
                act = np.flatnonzero(beta != 0.0)
                b0 = _newton_step(X, r, beta, b0, act, l1, l2, lo, hi, s)
        coefs[l, :] = beta
        icpt[l] = b0
        sweeps[l] = total
        conv[l] = done
        nfit = l + 1
        if stop_at > 0:
            nnz = 0
            for j in range(p):
                if beta[j] != 0.0:
                    nnz += 1
            if nnz >= stop_at:
                break
    return icpt[:nfit], coefs[:nfit], sweeps[:nfit], conv[:nfit], warm_b0[:nfit], warm_beta[:nfit]


@njit(cache=True)
def _location(y, lo, hi, s):
    n = y.shape[0]
    ones = np.ones(n)
    b0 = np.median(y)
    r = y - b0
    for _ in range(100):
        nb0 = _intercept_update(ones, r, b0, lo, hi, s, n)
        if nb0 == b0:
            break
        r -= nb0 - b0
        b0 = nb0
    return b0


# --------------------------------------------------------------------------
# Python API


@dataclass(frozen=True)
class SmoothLoss:
    """The loss actually minimized by the coordinate solver."""

    lo: float
    hi: float
    s: float

    @classmethod
    def from_spec(cls, spec: LossSpec, quantile_smoothing: float = QUANTILE_SMOOTHING):
        if spec.kind == HUBER:
            return cls(-spec.tuning, spec.tuning, 1.0)
        if spec.kind == QUANTILE:
            w = float(quantile_smoothing)
            if not w > 0:
                raise ValueError("quantile_smoothing must be positive")
            return cls((spec.tuning - 1.0) * w, spec.tuning * w, 1.0 / w)
        raise ValueError(f"selector supports huber and quantile losses, not {spec.kind!r}")

    def psi(self, t):
        return self.s * np.clip(t, self.lo, self.hi)

    def rho(self, t):
        t = np.asarray(t, dtype=float)
        lo, hi = self.lo, self.hi
        inner = 0.5 * t * t
        upper = hi * t - 0.5 * hi * hi
        lower = lo * t - 0.5 * lo * lo
        return self.s * np.where(t > hi, upper, np.where(t < lo, lower, inner))


@dataclass(frozen=True)
class PenaltySpec:
    lambda_grid: np.ndarray
    enet_alpha: float = 1.0
    degenerate: bool = False

    def __post_init__(self):
        g = np.array(self.lambda_grid, dtype=float)
        if g.ndim != 1 or g.size == 0:
            raise ValueError("lambda grid must be a non-empty 1-d sequence")
        if not 0 < self.enet_alpha <= 1:
            raise ValueError("enet_alpha must lie in (0, 1]")
        if not self.degenerate:
            if g.size < 2:
                raise ValueError("lambda grid needs at least 2 values")
            if np.any(g <= 0) or np.any(np.diff(g) >= 0):
                raise ValueError("lambda grid must be positive and strictly decreasing")
        g.setflags(write=False)
        object.__setattr__(self, "lambda_grid", g)


@dataclass(frozen=True)
class PenalizedFit:
    lambdas: np.ndarray
    intercept_path: np.ndarray
    coef_path: np.ndarray
    active_sizes: np.ndarray
    converged: np.ndarray
    sweeps: np.ndarray
    kkt_residuals: np.ndarray
    objective: np.ndarray
    warm_start_objective: np.ndarray
    loss_kind: str
    enet_alpha: float
    eligible: np.ndarray = field(repr=False)
    degenerate: bool = False


@dataclass(frozen=True)
class SelectionResult:
    support: tuple
    loss_kind: str
    lambda_used: float
    dropped_degenerates: tuple

    @property
    def K(self) -> int:
        return len(self.support)


def _as_eligible(p, eligible):
    if eligible is None:
        return np.ones(p, dtype=bool)
    e = np.asarray(eligible, dtype=bool)
    if e.shape != (p,):
        raise ValueError("eligible mask must have length p")
    return e


def robust_location(y, loss: LossSpec, quantile_smoothing: float = QUANTILE_SMOOTHING) -> float:
    """Minimizer of sum rho(y_i - b) for the selector's loss."""
    sl = SmoothLoss.from_spec(loss, quantile_smoothing)
    return float(_location(np.ascontiguousarray(y, dtype=float), sl.lo, sl.hi, sl.s))


def lambda_max(d: Dataset, loss: LossSpec, enet_alpha=1.0, eligible=None,
               quantile_smoothing: float = QUANTILE_SMOOTHING) -> float:
    """Smallest penalty at which the all-zero coefficient vector is optimal."""
    sl = SmoothLoss.from_spec(loss, quantile_smoothing)
    e = _as_eligible(d.p, eligible)
    b0 = robust_location(d.y, loss, quantile_smoothing)
    if not e.any():
        return 0.0
    g = sl.psi(d.y - b0) @ d.X[:, e] / d.n
    return float(np.max(np.abs(g)) / enet_alpha)


def default_lambda_grid(d: Dataset, loss: LossSpec, length: int = 100, ratio: float = 1e-3,
                        enet_alpha: float = 1.0, eligible=None,
                        quantile_smoothing: float = QUANTILE_SMOOTHING) -> PenaltySpec:
    """Geometric grid from lambda_max down to ``ratio * lambda_max``."""
    if length < 2:
        raise ValueError("grid length must be at least 2")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie in (0, 1)")
    lmax = lambda_max(d, loss, enet_alpha, eligible, quantile_smoothing)
    if not lmax > 0:
        return PenaltySpec(np.array([0.0]), enet_alpha, degenerate=True)
    return PenaltySpec(np.geomspace(lmax, lmax * ratio, length), enet_alpha)


def _objective(sl, y, X, b0, beta, lam, a):
    r = y - b0 - X @ beta
    pen = lam * (a * np.abs(beta).sum() + 0.5 * (1 - a) * (beta @ beta))
    return float(sl.rho(r).mean() + pen)


def kkt_residual(sl: SmoothLoss, X, y, b0, beta, lam, enet_alpha, eligible):
    """Largest violation of the optimality conditions at one path point."""
    n = X.shape[0]
    psi = sl.psi(y - b0 - X @ beta)
    grad = psi @ X / n
    l1 = lam * enet_alpha
    l2 = lam * (1.0 - enet_alpha)
    act = beta != 0
    viol = np.zeros_like(beta)
    viol[act] = np.abs(grad[act] - l1 * np.sign(beta[act]) - l2 * beta[act])
    ina = ~act & eligible
    viol[ina] = np.maximum(np.abs(grad[ina]) - l1, 0.0)
    return float(max(np.max(viol, initial=0.0), abs(psi.mean())))


def fit_penalized_path(
    d: Dataset,
    loss: LossSpec,
    pen: PenaltySpec,
    eligible=None,
    tol: float = 1e-7,
    max_sweeps: int = 10_000,
    stop_at_active: Optional[int] = None,
    quantile_smoothing: float = QUANTILE_SMOOTHING,
) -> PenalizedFit:
    """Coefficient path with warm starts from the largest penalty down.

    ``d`` should already be standardized. Columns outside ``eligible`` are
    held at zero. With ``stop_at_active`` the path stops at the first
    penalty whose fit has at least that many nonzero coefficients.
    """
    if loss.kind not in (HUBER, QUANTILE):
        raise ValueError("selector loss must be huber or quantile")
    sl = SmoothLoss.from_spec(loss, quantile_smoothing)
    e = _as_eligible(d.p, eligible)
    # column-major so coordinate updates read contiguous memory
    X = np.asfortranarray(d.X, dtype=float)
    y = np.ascontiguousarray(d.y, dtype=float)
    lambdas = np.asarray(pen.lambda_grid, dtype=float)
    b0 = float(_location(y, sl.lo, sl.hi, sl.s))

    if pen.degenerate:
        z = np.zeros((1, d.p))
        obj = np.array([_objective(sl, y, X, b0, z[0], 0.0, pen.enet_alpha)])
        return PenalizedFit(lambdas[:1], np.array([b0]), z, np.array([0]), np.array([True]),
                            np.array([0]), np.array([0.0]), obj, obj.copy(), loss.kind,
                            pen.enet_alpha, e, degenerate=True)

    icpt, coefs, sweeps, conv, wb0, wbeta = _cd_path(
        X, y, lambdas, float(pen.enet_alpha), sl.lo, sl.hi, sl.s, e, b0,
        float(tol), int(max_sweeps), int(stop_at_active or 0))
    m = icpt.shape[0]
    kkt = np.empty(m)
    obj = np.empty(m)
    wobj = np.empty(m)
    for l in range(m):
        lam = lambdas[l]
        kkt[l] = kkt_residual(sl, X, y, icpt[l], coefs[l], lam, pen.enet_alpha, e)
        obj[l] = _objective(sl, y, X, icpt[l], coefs[l], lam, pen.enet_alpha)
        wobj[l] = _objective(sl, y, X, wb0[l], wbeta[l], lam, pen.enet_alpha)
    if not conv.all():
        log.warning("selector did not converge at %d of %d path points", int((~conv).sum()), m)
    return PenalizedFit(
        lambdas=lambdas[:m].copy(),
        intercept_path=icpt,
        coef_path=coefs,
        active_sizes=(coefs != 0).sum(axis=1),
        converged=conv,
        sweeps=sweeps,
        kkt_residuals=kkt,
        objective=obj,
        warm_start_objective=wobj,
        loss_kind=loss.kind,
        enet_alpha=pen.enet_alpha,
        eligible=e,
    )


def select_top_k(fit: PenalizedFit, K: int) -> SelectionResult:
    """Support of size K read at the first penalty with at least K actives."""
    dropped = tuple(int(j) for j in np.flatnonzero(~fit.eligible))
    if K < 1:
        raise ValueError("K must be a positive integer")
    if K > int(fit.eligible.sum()):
        raise ValueError(f"K={K} exceeds the {int(fit.eligible.sum())} eligible predictors")
    if fit.degenerate:
        raise SelectionError("selection impossible: lambda_max is 0 (constant response)")
    hits = np.flatnonzero(fit.active_sizes >= K)
    if hits.size == 0:
        raise SelectionError(
            f"no path point reached {K} active coefficients (max {int(fit.active_sizes.max())}); "
            "use a longer or denser lambda grid"
        )
    l = int(hits[0])
    coef = fit.coef_path[l]
    order = np.lexsort((np.arange(coef.size), -np.abs(coef)))
    support = tuple(sorted(int(j) for j in order[:K]))
    return SelectionResult(support, fit.loss_kind, float(fit.lambdas[l]), dropped)


def active_size_monotone(fit: PenalizedFit, K: int) -> bool:
    """Whether active sizes start at 0 and never drop before reaching K."""
    a = fit.active_sizes
    if a.size == 0 or a[0] != 0:
        return False
    for i in range(1, a.size):
        if a[i - 1] >= K:
            break
        if a[i] < a[i - 1]:
            return False
    return True
