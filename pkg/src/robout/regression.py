"""LTS, MM and GS robust regression on a small set of selected predictors.

Every fit returns a :class:`RobustFit` whose ``scale`` is the residual scale
used for flagging:

* LTS: Fast-LTS (elemental starts, C-steps), then MAD initial scale and
  trimmed reweighting.
* MM:  Fast-S estimate (biweight, c = 1.547, 50% breakdown), then a fixed-scale
  biweight M-step (c = 4.685). The S-scale is reported as is.
* GS:  S-estimation of the M-scale of pairwise residual differences, an
  intercept from the biweight location of the residuals, then the
  sqrt(chi2) reweighting of the residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .data import PHI_INV_075
from .errors import RankError
from .losses import BIWEIGHT_MM_TUNING, BIWEIGHT_S_TUNING, biweight_rho, biweight_weight
from .scale import (
    FscHook,
    ScaleEstimate,
    ceil_fraction,
    gs_reweight,
    initial_scale,
    lts_reweight,
    trim_weights,
    consistency_factor,
)

LTS, MM, GS = "lts", "mm", "gs"
METHODS = (LTS, MM, GS)

#: M-scale breakdown target as a fraction of max(rho)
S_BREAKDOWN = 0.5
_COND_LIMIT = 1e12
#: M-scale tolerance while screening candidates; survivors are solved to 1e-12
_SCREEN_TOL = 1e-3


@dataclass(frozen=True)
class RobustFit:
    method: str
    intercept: float
    coefficients: np.ndarray
    residuals: np.ndarray
    weights: np.ndarray
    scale: float
    objective: float
    converged: bool
    scale_estimate: Optional[ScaleEstimate] = field(default=None, repr=False)
    info: dict = field(default_factory=dict, repr=False)

    def fitted(self, X) -> np.ndarray:
        return self.intercept + np.asarray(X, dtype=float) @ self.coefficients


def _ro(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


def _prepare(X, y):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float)
    if X.shape[0] != y.shape[0]:
        raise ValueError("X and y have different numbers of rows")
    Z = np.column_stack([np.ones(y.size), X])
    return X, y, Z


def _subsets(rng, n, k, count):
    keys = rng.random((count, n))
    return np.argsort(keys, axis=1, kind="stable")[:, :k]


def _batch_solve(A, b):
    """Solve A[m] x = b[m]; rows whose system is (near) singular come back NaN."""
    m, q = b.shape
    out = np.full((m, q), np.nan)
    if m == 0:
        return out, np.zeros(0, dtype=bool)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(A)
    ok = np.isfinite(cond) & (cond < _COND_LIMIT)
    if ok.any():
        out[ok] = np.linalg.solve(A[ok], b[ok][..., None])[..., 0]
    return out, ok


def _elemental_fits(Z, y, idx):
    A = Z[idx]  # (m, q, q)
    return _batch_solve(A, y[idx])


# --------------------------------------------------------------------------
# LTS


def _check_monotone(new, old):
    bad = new > old * (1 + 1e-9) + 1e-12
    if np.any(bad):
        raise AssertionError("C-step increased the trimmed objective")


def _cstep(Z, y, B, h):
    """One concentration step for every row of B.

    Returns new coefficients, their trimmed objectives, the h-subsets used,
    and a mask of rows whose h-subset design was non-singular.
    """
    R = y[None, :] - B @ Z.T
    H = np.argsort(R * R, axis=1, kind="stable")[:, :h]
    Zh = Z[H]
    yh = y[H]
    G = np.einsum("mij,mik->mjk", Zh, Zh)
    rhs = np.einsum("mij,mi->mj", Zh, yh)
    Bn, ok = _batch_solve(G, rhs)
    Rn = y[None, :] - np.where(ok[:, None], Bn, 0.0) @ Z.T
    obj = np.sort(Rn * Rn, axis=1)[:, :h].sum(axis=1)
    return Bn, obj, H, ok


def _trimmed_obj(Z, y, B, h):
    R = y[None, :] - B @ Z.T
    return np.sort(R * R, axis=1)[:, :h].sum(axis=1)


def fit_lts(X, y, alpha: float = 0.1, seed: int = 0, n_subsets: int = 500, n_keep: int = 10,
            n_initial_csteps: int = 2, max_csteps: int = 1000, fsc: FscHook = None) -> RobustFit:
    """Least trimmed squares via Fast-LTS.

    ``X`` may have zero columns (intercept-only model).
    """
    X, y, Z = _prepare(X, y)
    n, q = Z.shape
    if not 0 <= alpha <= 0.5:
        raise ValueError("alpha must lie in [0, 0.5]")
    h = ceil_fraction(1.0 - alpha, n)
    if h <= q - 1 or n < q:
        raise ValueError(f"h = {h} must exceed the number of predictors {q - 1}")
    rng = np.random.default_rng(seed)
    B, ok = _elemental_fits(Z, y, _subsets(rng, n, q, n_subsets))
    B = B[ok]
    if B.shape[0] == 0:
        raise RankError("all elemental subsets are singular")
    n_valid = B.shape[0]

    obj = _trimmed_obj(Z, y, B, h)
    for _ in range(n_initial_csteps):
        Bn, on, _, ok = _cstep(Z, y, B, h)
        B, on = Bn[ok], on[ok]
        _check_monotone(on, obj[ok])
        obj = on
        if B.shape[0] == 0:
            raise RankError("every h-subset design was singular")

    order = np.argsort(obj, kind="stable")[:n_keep]
    B, obj = B[order], obj[order]
    H_prev = None
    converged = np.zeros(B.shape[0], dtype=bool)
    for _ in range(max_csteps):
        Bn, on, H, ok = _cstep(Z, y, B, h)
        keep = ok | converged
        Bn = np.where(ok[:, None], Bn, B)
        on = np.where(ok, on, obj)
        _check_monotone(on, obj)
        Hs = np.sort(H, axis=1)
        same = np.all(Hs == H_prev, axis=1) if H_prev is not None else np.zeros(B.shape[0], bool)
        done = same | (on >= obj) | ~ok
        B = np.where(converged[:, None], B, Bn)
        obj = np.where(converged, obj, on)
        converged |= done
        H_prev = Hs
        if converged.all() or not keep.any():
            break
    best = int(np.argmin(obj))
    beta = B[best]
    # the final OLS is on the h smallest squared residuals of the best fit
    Bf, of, Hf, okf = _cstep(Z, y, beta[None, :], h)
    if okf[0] and of[0] <= obj[best]:
        beta, best_obj = Bf[0], float(of[0])
    else:
        best_obj = float(obj[best])
    resid = y - Z @ beta
    H = np.argsort(resid * resid, kind="stable")[:h]
    wts = np.zeros(n)
    wts[H] = 1.0

    sigma0 = initial_scale(resid)
    if sigma0 == 0 and np.any(resid != 0):
        # exact fit on more than half the data: rank by |r| directly
        n_trim = ceil_fraction(alpha, n)
        w = trim_weights(np.abs(resid), n_trim)
        raw = float(np.sqrt(np.sum(resid[w > 0] ** 2) / w.sum()))
        cf = consistency_factor(n_trim / n)
        w.setflags(write=False)
        est = ScaleEstimate(0.0, raw * cf, w, cf, 1.0, raw)
    else:
        est = lts_reweight(resid, sigma0, alpha, n_params=q, fsc=fsc)
    return RobustFit(
        method=LTS,
        intercept=float(beta[0]),
        coefficients=_ro(beta[1:]),
        residuals=_ro(resid),
        weights=_ro(wts),
        scale=float(est.sigma),
        objective=best_obj,
        converged=bool(converged[best]),
        scale_estimate=est,
        info={"h": h, "valid_subsets": int(n_valid)},
    )


# --------------------------------------------------------------------------
# M-scale kernels


@njit(cache=True)
def _rho_n(t, c):
    # biweight rho normalized to max 1
    u = (t / c) ** 2
    if u >= 1.0:
        return 1.0
    v = 1.0 - u
    return 1.0 - v * v * v


@njit(cache=True)
def _mscale(r, c, b, s0, tol, maxit):
    """Solve mean(rho(r / s)) = b for s (rho normalized to max 1)."""
    n = r.shape[0]
    nz = 0
    for i in range(n):
        if r[i] != 0.0:
            nz += 1
    if nz <= b * n:
        return 0.0
    s = s0
    if not s > 0.0:
        s = np.median(np.abs(r)) / 0.6744897501960817
        if not s > 0.0:
            s = np.max(np.abs(r))
    for _ in range(maxit):
        acc = 0.0
        for i in range(n):
            acc += _rho_n(r[i] / s, c)
        sn = s * np.sqrt(acc / n / b)
        if abs(sn - s) <= tol * s:
            return sn
        s = sn
    return s


@njit(cache=True)
def _mscale_step(r, c, b, s):
    n = r.shape[0]
    acc = 0.0
    for i in range(n):
        acc += _rho_n(r[i] / s, c)
    return s * np.sqrt(acc / n / b)


@njit(cache=True)
def _mscale_pairs(r, c, b, s0, tol, maxit):
    """M-scale of all differences r_i - r_j, i < j."""
    n = r.shape[0]
    npairs = n * (n - 1) // 2
    nz = 0
    for i in range(n):
        for j in range(i + 1, n):
            if r[i] != r[j]:
                nz += 1
    if nz <= b * npairs:
        return 0.0
    s = s0
    if not s > 0.0:
        med = np.median(r)
        s = np.sqrt(2.0) * np.median(np.abs(r - med)) / 0.6744897501960817
        if not s > 0.0:
            s = np.max(r) - np.min(r)
    for _ in range(maxit):
        sn = _mscale_pairs_step(r, c, b, s)
        if abs(sn - s) <= tol * s:
            return sn
        s = sn
    return s


@njit(cache=True)
def _mscale_pairs_step(r, c, b, s):
    n = r.shape[0]
    acc = 0.0
    for i in range(n):
        ri = r[i]
        for j in range(i + 1, n):
            acc += _rho_n((ri - r[j]) / s, c)
    npairs = n * (n - 1) // 2
    return s * np.sqrt(acc / npairs / b)


@njit(cache=True)
def _pair_wls(X, y, r, s, c):
    """Weighted LS on pairwise differences with biweight weights of (r_i - r_j)/s."""
    n, k = X.shape
    G = np.zeros((k, k))
    g = np.zeros(k)
    dx = np.zeros(k)
    for i in range(n):
        for j in range(i + 1, n):
            t = (r[i] - r[j]) / s
            u = (t / c) ** 2
            if u >= 1.0:
                continue
            w = (1.0 - u) ** 2
            dy = y[i] - y[j]
            for a in range(k):
                dx[a] = X[i, a] - X[j, a]
            for a in range(k):
                g[a] += w * dx[a] * dy
                for bb in range(k):
                    G[a, bb] += w * dx[a] * dx[bb]
    return G, g


@njit(cache=True)
def _pair_rho_sum(r, s, c):
    n = r.shape[0]
    acc = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            acc += _rho_n((r[i] - r[j]) / s, c)
    return acc


# --------------------------------------------------------------------------
# MM


def _solve(G, g):
    try:
        if np.linalg.cond(G) >= _COND_LIMIT:
            return None
        return np.linalg.solve(G, g)
    except np.linalg.LinAlgError:
        return None


def _wls(Z, y, w):
    Zw = Z * w[:, None]
    return _solve(Zw.T @ Z, Zw.T @ y)


def _s_refine(Z, y, beta, s, c, b, steps, tol):
    """IRWLS steps that lower the M-scale; ``steps=None`` iterates to convergence."""
    it = 0
    converged = False
    while steps is None or it < steps:
        r = y - Z @ beta
        if s == 0:
            converged = True
            break
        w = biweight_weight(r / s, c)
        nb = _wls(Z, y, w)
        if nb is None:
            break
        r = y - Z @ nb
        if steps is None:
            ns = _mscale(r, c, b, s, 1e-12, 1000)
        else:
            ns = _mscale_step(r, c, b, s)
        it += 1
        delta = np.max(np.abs(nb - beta)) if beta.size else 0.0
        beta = nb
        if steps is None and (abs(ns - s) <= tol * s and delta <= tol * (1 + np.max(np.abs(beta)))):
            s = ns
            converged = True
            break
        s = ns
        if steps is None and it >= 500:
            break
    return beta, s, converged


def s_estimate(X, y, seed: int = 0, n_subsets: int = 500, n_best: int = 5, k_initial: int = 2,
               c: float = BIWEIGHT_S_TUNING, b: float = S_BREAKDOWN, tol: float = 1e-10):
    """Fast-S regression. Returns (coefficients incl. intercept, scale, converged)."""
    X, y, Z = _prepare(X, y)
    n, q = Z.shape
    rng = np.random.default_rng(seed)
    B, ok = _elemental_fits(Z, y, _subsets(rng, n, q, n_subsets))
    B = B[ok]
    if B.shape[0] == 0:
        raise RankError("all elemental subsets are singular")
    cand = []
    for beta in B:
        r = y - Z @ beta
        s = _mscale(r, c, b, 0.0, _SCREEN_TOL, 1000)
        if s > 0:
            beta, s, _ = _s_refine(Z, y, beta, s, c, b, k_initial, tol)
        cand.append((s, beta))
    scales = np.array([s for s, _ in cand])
    if np.any(scales == 0):
        i = int(np.flatnonzero(scales == 0)[0])
        return cand[i][1], 0.0, True
    best = None
    for i in np.argsort(scales, kind="stable")[:n_best]:
        s, beta = cand[i]
        beta, s, conv = _s_refine(Z, y, beta, s, c, b, None, tol)
        s = _mscale(y - Z @ beta, c, b, s, 1e-12, 1000)
        if best is None or s < best[1]:
            best = (beta, s, conv)
    return best


def fit_mm(X, y, seed: int = 0, n_subsets: int = 500, n_best: int = 5, k_initial: int = 2,
           c_s: float = BIWEIGHT_S_TUNING, c_mm: float = BIWEIGHT_MM_TUNING,
           max_iter: int = 500, tol: float = 1e-10) -> RobustFit:
    """MM regression: S initial estimate and scale, then a biweight M-step."""
    X, y, Z = _prepare(X, y)
    n, q = Z.shape
    if n < q:
        raise ValueError("need at least K + 1 observations")
    beta_s, sigma, s_conv = s_estimate(X, y, seed, n_subsets, n_best, k_initial, c_s,
                                       S_BREAKDOWN, tol)
    r_s = y - Z @ beta_s
    if sigma == 0:
        return RobustFit(MM, float(beta_s[0]), _ro(beta_s[1:]), _ro(r_s), _ro(np.ones(n)),
                         0.0, 0.0, True, info={"s_scale": 0.0, "m_step_accepted": False})

    beta = beta_s.copy()
    converged = False
    for it in range(max_iter):
        w = biweight_weight((y - Z @ beta) / sigma, c_mm)
        nb = _wls(Z, y, w)
        if nb is None:
            break
        delta = np.max(np.abs(nb - beta))
        beta = nb
        if delta <= tol * (1 + np.max(np.abs(beta))):
            converged = True
            break
    r = y - Z @ beta
    obj_mm = float(np.mean(biweight_rho(r / sigma, c_mm)))
    obj_s = float(np.mean(biweight_rho(r_s / sigma, c_mm)))
    accepted = obj_mm <= obj_s * (1 + 1e-12)
    if not accepted:
        beta, r, obj_mm = beta_s, r_s, obj_s
    w = biweight_weight(r / sigma, c_mm)
    w = w / w.max() if w.max() > 0 else np.ones(n)
    return RobustFit(
        method=MM,
        intercept=float(beta[0]),
        coefficients=_ro(beta[1:]),
        residuals=_ro(r),
        weights=_ro(w),
        scale=float(sigma),
        objective=obj_mm,
        converged=bool(converged and s_conv),
        info={"s_scale": float(sigma), "s_objective": obj_s, "m_step_accepted": bool(accepted),
              "s_coefficients": beta_s.tolist()},
    )


# --------------------------------------------------------------------------
# GS


def biweight_location(e, c: float = BIWEIGHT_MM_TUNING, tol: float = 1e-12, max_iter: int = 200) -> float:
    """Biweight M-estimate of location with MAD auxiliary scale."""
    e = np.asarray(e, dtype=float)
    mu = float(np.median(e))
    s = float(np.median(np.abs(e - mu)) / PHI_INV_075)
    if s == 0:
        return mu
    for _ in range(max_iter):
        w = biweight_weight((e - mu) / s, c)
        nmu = float(np.sum(w * e) / np.sum(w))
        if abs(nmu - mu) <= tol * s:
            return nmu
        mu = nmu
    return mu


def _gs_refine(X, y, beta, s, c, b, steps, tol):
    it = 0
    converged = False
    while steps is None or it < steps:
        r = y - X @ beta
        if s == 0:
            converged = True
            break
        G, g = _pair_wls(X, y, r, s, c)
        nb = _solve(G, g)
        if nb is None:
            break
        r = y - X @ nb
        if steps is None:
            ns = _mscale_pairs(r, c, b, s, 1e-12, 1000)
        else:
            ns = _mscale_pairs_step(r, c, b, s)
        it += 1
        delta = np.max(np.abs(nb - beta))
        beta = nb
        if steps is None and abs(ns - s) <= tol * s and delta <= tol * (1 + np.max(np.abs(beta))):
            s = ns
            converged = True
            break
        s = ns
        if steps is None and it >= 500:
            break
    return beta, s, converged


def fit_gs(X, y, seed: int = 0, n_subsets: int = 500, n_best: int = 5, k_initial: int = 2,
           c: float = BIWEIGHT_S_TUNING, tol: float = 1e-10, fsc: FscHook = None) -> RobustFit:
    """Generalized S regression on pairwise residual differences."""
    X, y, Z = _prepare(X, y)
    n, q = Z.shape
    k = q - 1
    if n < k + 2:
        raise ValueError("GS needs at least K + 2 observations")
    b = S_BREAKDOWN
    if k == 0:
        beta = np.zeros(0)
        s = _mscale_pairs(y.copy(), c, b, 0.0, 1e-12, 1000)
        converged = True
    else:
        rng = np.random.default_rng(seed)
        B, ok = _elemental_fits(Z, y, _subsets(rng, n, q, n_subsets))
        B = B[ok][:, 1:]
        if B.shape[0] == 0:
            raise RankError("all elemental subsets are singular")
        Xc = np.ascontiguousarray(X)
        cand = []
        for beta in B:
            r = y - Xc @ beta
            s = _mscale_pairs(r, c, b, 0.0, _SCREEN_TOL, 1000)
            if s > 0:
                beta, s, _ = _gs_refine(Xc, y, beta, s, c, b, k_initial, tol)
            cand.append((s, beta))
        scales = np.array([s for s, _ in cand])
        if np.any(scales == 0):
            i = int(np.flatnonzero(scales == 0)[0])
            beta, s, converged = cand[i][1], 0.0, True
        else:
            best = None
            for i in np.argsort(scales, kind="stable")[:n_best]:
                s, beta = cand[i]
                beta, s, conv = _gs_refine(Xc, y, beta, s, c, b, None, tol)
                s = _mscale_pairs(y - Xc @ beta, c, b, s, 1e-12, 1000)
                if best is None or s < best[1]:
                    best = (beta, s, conv)
            beta, s, converged = best

    # differences of two N(0, sigma^2) residuals have sd sqrt(2) sigma
    sigma_gs = s / math.sqrt(2.0)
    e = y - X @ beta
    intercept = biweight_location(e)
    resid = e - intercept
    if sigma_gs == 0 and np.any(resid != 0):
        w = (resid == 0).astype(float)
        w.setflags(write=False)
        est = ScaleEstimate(0.0, 0.0, w, 1.0, 1.0, 0.0)
    else:
        est = gs_reweight(resid, sigma_gs, n_params=q, fsc=fsc)
    obj = float(_pair_rho_sum(resid, s, c) / (n * (n - 1) / 2)) if s > 0 else 0.0
    return RobustFit(
        method=GS,
        intercept=float(intercept),
        coefficients=_ro(beta),
        residuals=_ro(resid),
        weights=_ro(est.weights),
        scale=float(est.sigma),
        objective=obj,
        converged=bool(converged),
        scale_estimate=est,
        info={"pairwise_scale": float(s), "gs_scale": float(sigma_gs)},
    )


def fit_robust(method: str, X, y, alpha: float = 0.1, seed: int = 0, **kw) -> RobustFit:
    if method == LTS:
        return fit_lts(X, y, alpha=alpha, seed=seed, **kw)
    if method == MM:
        return fit_mm(X, y, seed=seed, **kw)
    if method == GS:
        return fit_gs(X, y, seed=seed, **kw)
    raise ValueError(f"unknown regression method {method!r}; expected one of {METHODS}")
