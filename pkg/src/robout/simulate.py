"""Synthetic regression data with conditional outliers, leverage, sparsity and
equicorrelated predictors."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np

from .data import Dataset, load_csv, write_csv
from .scale import ceil_fraction

VARIANCE = "variance"
MEAN = "mean"
POSITIVE = "positive"
NEGATIVE = "negative"

#: (p, n) per dimension letter
DIMENSIONS = {"a": (100, 200), "b": (200, 100), "c": (500, 50)}
PRESET_IDS = (
    "1a", "1b", "1c", "2a", "2b", "2c", "3a", "3b", "3c",
    "4a", "4b", "4c", "5a", "5b", "5c", "6b", "7b",
)
_SPARSE = {2, 4, 5}
_LEVERAGE = {3, 4, 7}
_MEAN_SHIFT = {6, 7}
_SUBSTREAMS = ("support", "outliers", "beta", "X", "noise", "zeros")


@dataclass(frozen=True)
class ScenarioConfig:
    n: int
    p: int
    K: int = 3
    alpha: float = 0.1
    m: float = 19.0
    outlier_mode: str = VARIANCE
    leverage: bool = False
    gamma: float = 0.0
    rho: float = 0.0
    beta0: float = 10.0
    beta_sign: str = POSITIVE
    sigma: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n < 2 or self.p < 1:
            raise ValueError("need n >= 2 and p >= 1")
        if not 1 <= self.K < self.p:
            raise ValueError("K must satisfy 1 <= K < p")
        if not 0 <= self.alpha <= 0.5:
            raise ValueError("alpha must lie in [0, 0.5]")
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.outlier_mode not in (VARIANCE, MEAN):
            raise ValueError(f"outlier_mode must be {VARIANCE!r} or {MEAN!r}")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")
        if not 0 <= self.rho < 1:
            raise ValueError("rho must lie in [0, 1)")
        if self.beta_sign not in (POSITIVE, NEGATIVE):
            raise ValueError(f"beta_sign must be {POSITIVE!r} or {NEGATIVE!r}")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.seed < 0:
            raise ValueError("seed must be nonnegative")

    @property
    def n_outliers(self) -> int:
        return ceil_fraction(self.alpha, self.n)

    @property
    def n_zeros(self) -> int:
        return int(math.floor(self.gamma * self.n * (self.p - self.K) + 0.5))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class GeneratedInstance:
    dataset: Dataset
    true_support: tuple
    true_outliers: tuple
    config: ScenarioConfig


def scenario_preset(scenario_id: str, **overrides) -> ScenarioConfig:
    """Configuration for a named scenario such as ``"2b"``.

    Keyword arguments override individual fields (``m``, ``seed``, ...).
    """
    sid = str(scenario_id).strip().lower()
    if sid not in PRESET_IDS:
        raise ValueError(f"unknown scenario {scenario_id!r}; expected one of {', '.join(PRESET_IDS)}")
    family, dim = int(sid[0]), sid[1]
    # the mean-shift presets keep 100 predictors and 200 rows despite their "b" suffix
    p, n = DIMENSIONS["a"] if family in _MEAN_SHIFT else DIMENSIONS[dim]
    cfg = ScenarioConfig(
        n=n,
        p=p,
        gamma=0.3 if family in _SPARSE else 0.0,
        leverage=family in _LEVERAGE,
        rho=0.7 if family == 5 else 0.0,
        outlier_mode=MEAN if family in _MEAN_SHIFT else VARIANCE,
    )
    return replace(cfg, **overrides) if overrides else cfg


def _streams(seed: int):
    children = np.random.SeedSequence(seed).spawn(len(_SUBSTREAMS))
    return {name: np.random.Generator(np.random.PCG64(s)) for name, s in zip(_SUBSTREAMS, children)}


def generate(cfg: ScenarioConfig) -> GeneratedInstance:
    """Draw one instance. Identical configs give bit-identical output."""
    n, p, K = cfg.n, cfg.p, cfg.K
    rs = _streams(cfg.seed)

    support = np.sort(rs["support"].choice(p, size=K, replace=False))
    outliers = np.sort(rs["outliers"].choice(n, size=cfg.n_outliers, replace=False))
    lo, hi = (5.0, 15.0) if cfg.beta_sign == POSITIVE else (-15.0, -5.0)
    beta = rs["beta"].uniform(lo, hi, size=K)

    gx = rs["X"]
    if cfg.rho > 0:
        shared = gx.standard_normal((n, 1))
        X = math.sqrt(cfg.rho) * shared + math.sqrt(1.0 - cfg.rho) * gx.standard_normal((n, p))
    else:
        X = gx.standard_normal((n, p))
    if cfg.leverage and outliers.size:
        X[np.ix_(outliers, support)] *= math.sqrt(cfg.m)

    eps = cfg.sigma * rs["noise"].standard_normal(n)
    if cfg.outlier_mode == VARIANCE:
        eps[outliers] *= math.sqrt(cfg.m)
        shift = np.full(n, cfg.beta0)
    else:
        shift = np.full(n, 10.0)
        shift[outliers] = 10.0 * cfg.m

    # zero entries of the non-predictor block, placed uniformly
    others = np.setdiff1d(np.arange(p), support)
    if cfg.n_zeros:
        flat = rs["zeros"].choice(n * others.size, size=cfg.n_zeros, replace=False)
        rows, cols = np.divmod(flat, others.size)
        X[rows, others[cols]] = 0.0

    y = shift + X[:, support] @ beta + eps
    return GeneratedInstance(
        dataset=Dataset(y, X),
        true_support=tuple(int(j) for j in support),
        true_outliers=tuple(int(i) for i in outliers),
        config=cfg,
    )


def true_coefficients(cfg: ScenarioConfig) -> np.ndarray:
    """The coefficient draw that :func:`generate` uses for ``cfg``."""
    rs = _streams(cfg.seed)
    lo, hi = (5.0, 15.0) if cfg.beta_sign == POSITIVE else (-15.0, -5.0)
    return rs["beta"].uniform(lo, hi, size=cfg.K)


def save_instance(inst: GeneratedInstance, directory: Union[str, Path]) -> None:
    """Write ``data.csv`` and ``truth.json`` (0-based indices)."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    write_csv(inst.dataset, out / "data.csv")
    truth = {
        "support": list(inst.true_support),
        "outliers": list(inst.true_outliers),
        "config": inst.config.to_dict(),
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=2, sort_keys=True) + "\n")


def load_instance(directory: Union[str, Path]) -> GeneratedInstance:
    src = Path(directory)
    truth = json.loads((src / "truth.json").read_text())
    d = load_csv(src / "data.csv", "y")
    return GeneratedInstance(d, tuple(truth["support"]), tuple(truth["outliers"]),
                             ScenarioConfig(**truth["config"]))
