"""End-to-end detection: robust selection, robust refit, scaled-residual flags."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .data import Dataset, format_float, robust_standardize
from .errors import InfeasibleError, RankError, SelectionError, StageError
from .losses import HUBER, QUANTILE, LossSpec
from .regression import GS, LTS, METHODS, MM, RobustFit, fit_robust
from .scale import OutlierReport, flag_outliers
from .selection import (
    PenalizedFit,
    SelectionResult,
    default_lambda_grid,
    fit_penalized_path,
    select_top_k,
)

_LOSS_CODE = {HUBER: "H", QUANTILE: "Q"}
_CODE_LOSS = {v: k for k, v in _LOSS_CODE.items()}


@dataclass(frozen=True)
class RoboutVariant:
    selector_loss: str = HUBER
    regressor: str = MM
    K: int = 3
    alpha: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.selector_loss not in _LOSS_CODE:
            raise ValueError(f"selector_loss must be one of {tuple(_LOSS_CODE)}")
        if self.regressor not in METHODS:
            raise ValueError(f"regressor must be one of {METHODS}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not 0 <= self.alpha <= 0.5:
            raise ValueError("alpha must lie in [0, 0.5]")

    @property
    def name(self) -> str:
        return f"SNCD-{_LOSS_CODE[self.selector_loss]}+{self.regressor.upper()}"

    @property
    def loss(self) -> LossSpec:
        return LossSpec.huber() if self.selector_loss == HUBER else LossSpec.quantile(0.5)


def parse_variant(name: str, **fields) -> RoboutVariant:
    """``"sncd-h+mm"`` (any case) to a :class:`RoboutVariant`."""
    s = name.strip().lower()
    try:
        sel, reg = s.split("+")
        prefix, code = sel.rsplit("-", 1)
        if prefix != "sncd":
            raise ValueError
        loss = _CODE_LOSS[code.upper()]
    except (ValueError, KeyError):
        raise ValueError(
            f"bad variant {name!r}; expected e.g. 'sncd-h+mm' (losses h/q, regressors lts/mm/gs)"
        ) from None
    if reg not in METHODS:
        raise ValueError(f"bad regressor in {name!r}; expected one of {METHODS}")
    return RoboutVariant(loss, reg, **fields)


def all_variants(**fields) -> list:
    """The six selector x regressor combinations in a fixed order."""
    return [RoboutVariant(l, r, **fields) for l in (HUBER, QUANTILE) for r in (LTS, GS, MM)]


def parse_variants(spec: str, **fields) -> list:
    """Comma-separated names, or ``all``."""
    if spec.strip().lower() == "all":
        return all_variants(**fields)
    return [parse_variant(tok, **fields) for tok in spec.split(",") if tok.strip()]


@dataclass(frozen=True)
class DetectionOutcome:
    variant: RoboutVariant
    selection: SelectionResult
    fit: RobustFit
    report: OutlierReport
    diagnostics: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Infeasible:
    """A variant that could not be computed on the data."""

    variant: RoboutVariant
    stage: str
    reason: str


def selection_path(d: Dataset, loss: LossSpec, K: int) -> tuple:
    """Standardize, build the penalty grid and run the path up to K actives.

    Returns ``(PenalizedFit, StandardizationStats)``.
    """
    ds, stats = robust_standardize(d)
    eligible = stats.eligible
    pen = default_lambda_grid(ds, loss, eligible=eligible)
    path = fit_penalized_path(ds, loss, pen, eligible=eligible, stop_at_active=K)
    return path, stats


def _select(path: PenalizedFit, K: int) -> SelectionResult:
    try:
        return select_top_k(path, K)
    except SelectionError as e:
        raise InfeasibleError(str(e), stage="selection") from e
    except ValueError as e:
        raise InfeasibleError(str(e), stage="selection") from e


def _regress(d: Dataset, sel: SelectionResult, v: RoboutVariant, fit_options: dict) -> RobustFit:
    Xs = d.X[:, list(sel.support)]
    try:
        return fit_robust(v.regressor, Xs, d.y, alpha=v.alpha, seed=v.seed, **fit_options)
    except RankError as e:
        raise InfeasibleError(f"{v.name}: {e}", stage="regression") from e
    except ValueError as e:
        # too few observations for the regressor at this support size
        raise InfeasibleError(f"{v.name}: {e}", stage="regression") from e


def _finish(d, v, sel, path, fit, t_sel, t_reg) -> DetectionOutcome:
    t0 = time.perf_counter()
    report = flag_outliers(fit.residuals, fit.scale)
    diag = {
        "selector_converged": bool(path.converged.all()),
        "selector_path_points": int(path.lambdas.size),
        "selector_max_kkt": float(path.kkt_residuals.max()),
        "lambda_used": sel.lambda_used,
        "regressor_converged": fit.converged,
        "degenerate_scale": report.degenerate_scale,
        "timings": {"selection": t_sel, "regression": t_reg,
                    "flagging": time.perf_counter() - t0},
    }
    return DetectionOutcome(v, sel, fit, report, diag)


def _staged(stage, fn, *args):
    t0 = time.perf_counter()
    try:
        out = fn(*args)
    except (InfeasibleError, StageError):
        raise
    except Exception as e:
        raise StageError(stage, e) from e
    return out, time.perf_counter() - t0


def detect(d: Dataset, v: RoboutVariant, fit_options: Optional[dict] = None,
           path: Optional[PenalizedFit] = None) -> DetectionOutcome:
    """Run selection, robust regression and flagging for one variant.

    Raises
    ------
    InfeasibleError
        The variant cannot be computed on ``d`` (support size unreachable,
        every elemental subset singular, or too few rows).
    StageError
        Any other failure, tagged with the stage it came from.
    """
    fit_options = fit_options or {}
    t_path = 0.0
    if path is None:
        (path, _), t_path = _staged("selection", selection_path, d, v.loss, v.K)
    sel, t_sel = _staged("selection", _select, path, v.K)
    fit, t_reg = _staged("regression", _regress, d, sel, v, fit_options)
    return _finish(d, v, sel, path, fit, t_path + t_sel, t_reg)


def detect_all_variants(d: Dataset, K_grid=(3,), alpha: float = 0.1, seed: int = 0,
                        variants: Optional[list] = None, fit_options: Optional[dict] = None) -> dict:
    """Every variant at every K. Values are outcomes or :class:`Infeasible`.

    Keys are ``(variant_name, K)``. One selection path per loss is shared by
    all K and regressors.
    """
    base = variants if variants is not None else all_variants()
    Kmax = max(K_grid)
    paths = {}
    out = {}
    for K in K_grid:
        for b in base:
            v = replace(b, K=K, alpha=alpha, seed=seed)
            key = (v.name, K)
            try:
                if v.selector_loss not in paths:
                    paths[v.selector_loss], _ = _staged("selection", selection_path, d, v.loss, Kmax)
                out[key] = detect(d, v, fit_options, path=paths[v.selector_loss][0])
            except InfeasibleError as e:
                out[key] = Infeasible(v, e.stage or "unknown", str(e))
    return out


# --------------------------------------------------------------------------
# serialization


def outcome_to_dict(o: DetectionOutcome, d: Optional[Dataset] = None,
                    include_timings: bool = False) -> dict:
    names = d.names() if d is not None else None
    diag = dict(o.diagnostics)
    if not include_timings:
        diag.pop("timings", None)
    sel = list(o.selection.support)
    return {
        "variant": o.variant.name,
        "K": o.variant.K,
        "alpha": o.variant.alpha,
        "seed": o.variant.seed,
        "selection": {
            "support": sel,
            "support_names": [names[j] for j in sel] if names else None,
            "lambda": o.selection.lambda_used,
            "dropped_degenerate_columns": list(o.selection.dropped_degenerates),
        },
        "fit": {
            "method": o.fit.method,
            "intercept": o.fit.intercept,
            "coefficients": [float(c) for c in o.fit.coefficients],
            "scale": o.fit.scale,
            "objective": o.fit.objective,
            "converged": o.fit.converged,
        },
        "flags": {
            "threshold": o.report.threshold,
            "flagged_indices": list(o.report.flagged_indices),
            "n_flagged": o.report.n_flagged,
            "degenerate_scale": o.report.degenerate_scale,
        },
        "diagnostics": diag,
    }


def infeasible_to_dict(x: Infeasible) -> dict:
    return {"variant": x.variant.name, "K": x.variant.K, "infeasible": True,
            "stage": x.stage, "reason": x.reason}


def write_outcome_json(o: DetectionOutcome, path: Union[str, Path], d: Optional[Dataset] = None,
                       include_timings: bool = False) -> None:
    Path(path).write_text(json.dumps(outcome_to_dict(o, d, include_timings), indent=2) + "\n")


def write_observation_csv(o: DetectionOutcome, path: Union[str, Path]) -> None:
    """One row per observation: index, residual, scaled residual, weight, flag."""
    r = o.fit.residuals
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "residual", "scaled_residual", "weight", "flag"])
        for i in range(r.size):
            w.writerow([i, format_float(r[i]), format_float(o.report.scaled_residuals[i]),
                        format_float(o.fit.weights[i]), int(o.report.flags[i])])
