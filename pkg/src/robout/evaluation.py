"""Outlier and predictor recovery metrics, and the Monte Carlo benchmark runner."""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .errors import InfeasibleError
from .pipeline import RoboutVariant, detect, selection_path
from .simulate import ScenarioConfig, generate, scenario_preset

METRICS = ("mr", "sr", "f1", "mp", "sp", "ap")


@dataclass(frozen=True)
class MetricsRecord:
    mr: Optional[float]
    sr: float
    f1: Optional[float]
    mp: float
    sp: float
    ap: float


def f1_score(mr: float, sr: float) -> float:
    a, b = 1.0 - mr, 1.0 - sr
    return 0.0 if a + b <= 0 else 2.0 * a * b / (a + b)


def outlier_metrics(true_outliers, flagged, n: Optional[int] = None) -> tuple:
    """(mr, sr, f1). ``mr`` and ``f1`` are None when there are no true outliers."""
    O, F = set(true_outliers), set(flagged)
    if n is not None:
        bad = [i for i in O | F if not 0 <= i < n]
        if bad:
            raise ValueError(f"indices out of range [0, {n}): {sorted(bad)[:5]}")
    sr = len(F - O) / len(F) if F else 0.0
    if not O:
        return None, sr, None
    mr = len(O - F) / len(O)
    return mr, sr, f1_score(mr, sr)


def predictor_metrics(true_support, selected) -> tuple:
    """(masked, swamped, their mean) for one replicate."""
    D, S = set(true_support), set(selected)
    mp, sp = len(D - S), len(S - D)
    return mp, sp, (mp + sp) / 2.0


def parse_m_grid(spec: str) -> list:
    """``"3:2:19"`` -> [3, 5, ..., 19]; also accepts ``"19"`` or ``"3,7,19"``."""
    s = spec.strip()
    if ":" in s:
        parts = s.split(":")
        if len(parts) != 3:
            raise ValueError(f"m grid {spec!r} must be start:step:stop")
        a, st, b = (float(x) for x in parts)
        if st <= 0 or b < a:
            raise ValueError(f"m grid {spec!r} needs step > 0 and stop >= start")
        count = int(math.floor((b - a) / st + 1e-9)) + 1
        vals = [a + i * st for i in range(count)]
    else:
        vals = [float(x) for x in s.split(",") if x.strip()]
    if not vals or any(v < 1 for v in vals):
        raise ValueError("every m must be >= 1")
    return [int(v) if float(v).is_integer() else v for v in vals]


@dataclass(frozen=True)
class ReplicateRecord:
    m: float
    variant: str
    replicate: int
    seed: int
    metrics: Optional[MetricsRecord]
    infeasible: bool = False
    reason: str = ""
    seconds: float = 0.0


@dataclass(frozen=True)
class CellSummary:
    variant: str
    m: float
    mean: dict
    sd: dict
    n_feasible: int
    n_infeasible: int


@dataclass
class BenchmarkResult:
    scenario_id: str
    variants: list
    m_grid: list
    replicates: int
    base_seed: int
    seeds: list
    records: list = field(default_factory=list, repr=False)
    cells: dict = field(default_factory=dict)

    def cell(self, variant: str, m) -> CellSummary:
        return self.cells[(variant, m)]

    def values(self, variant: str, m, metric: str) -> np.ndarray:
        return np.array([getattr(r.metrics, metric) for r in self.records
                         if r.variant == variant and r.m == m and not r.infeasible
                         and getattr(r.metrics, metric) is not None], dtype=float)


def replicate_seed(base_seed: int, r: int) -> int:
    return int(base_seed) ^ int(r)


def _run_replicate(cfg: ScenarioConfig, variants: Sequence[RoboutVariant], r: int,
                   seed: int, fit_options: Optional[dict]):
    inst = generate(replace(cfg, seed=seed))
    d = inst.dataset
    out = []
    paths = {}
    for v in variants:
        v = replace(v, seed=seed)
        t0 = time.perf_counter()
        try:
            if v.selector_loss not in paths:
                paths[v.selector_loss] = selection_path(d, v.loss, max(w.K for w in variants))[0]
            o = detect(d, v, fit_options, path=paths[v.selector_loss])
        except InfeasibleError as e:
            out.append(ReplicateRecord(cfg.m, v.name, r, seed, None, True, str(e),
                                       time.perf_counter() - t0))
            continue
        mr, sr, f1 = outlier_metrics(inst.true_outliers, o.report.flagged_indices, d.n)
        mp, sp, ap = predictor_metrics(inst.true_support, o.selection.support)
        out.append(ReplicateRecord(cfg.m, v.name, r, seed, MetricsRecord(mr, sr, f1, mp, sp, ap),
                                   seconds=time.perf_counter() - t0))
    return out


def _summarize(records, variant, m):
    rs = [x for x in records if x.variant == variant and x.m == m]
    ok = [x for x in rs if not x.infeasible]
    mean, sd = {}, {}
    for k in METRICS:
        vals = np.array([getattr(x.metrics, k) for x in ok if getattr(x.metrics, k) is not None])
        mean[k] = float(vals.mean()) if vals.size else None
        sd[k] = float(vals.std(ddof=1)) if vals.size > 1 else (0.0 if vals.size else None)
    return CellSummary(variant, m, mean, sd, len(ok), len(rs) - len(ok))


def default_threads() -> int:
    env = os.environ.get("ROBOUT_THREADS")
    return max(1, int(env)) if env else 1


def run_benchmark(scenario: Union[str, ScenarioConfig], variants: Sequence[RoboutVariant],
                  m_grid: Sequence = (19,), replicates: int = 100, base_seed: int = 0,
                  threads: Optional[int] = None, fit_options: Optional[dict] = None,
                  progress=None) -> BenchmarkResult:
    """Monte Carlo over m values and replicates.

    Replicate ``r`` draws its data with seed ``base_seed ^ r``, shared by all
    variants at the same m. Results do not depend on ``threads``.
    """
    if replicates < 1:
        raise ValueError("replicates must be >= 1")
    if not variants:
        raise ValueError("no variants requested")
    if isinstance(scenario, ScenarioConfig):
        sid, base = "custom", scenario
    else:
        sid, base = str(scenario), scenario_preset(scenario)
    seeds = [replicate_seed(base_seed, r) for r in range(replicates)]
    jobs = [(replace(base, m=m), list(variants), r, seeds[r], fit_options)
            for m in m_grid for r in range(replicates)]
    threads = threads or default_threads()
    records = []
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            for i, recs in enumerate(ex.map(_run_replicate, *zip(*jobs))):
                records.extend(recs)
                if progress:
                    progress(i + 1, len(jobs))
    else:
        for i, job in enumerate(jobs):
            records.extend(_run_replicate(*job))
            if progress:
                progress(i + 1, len(jobs))
    names = [v.name for v in variants]
    res = BenchmarkResult(sid, names, list(m_grid), replicates, base_seed, seeds, records)
    for m in m_grid:
        for name in names:
            res.cells[(name, m)] = _summarize(records, name, m)
    return res


# --------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    return "" if v is None else repr(float(v))


def write_long_csv(res: BenchmarkResult, path) -> None:
    """scenario, variant, m, metric, mean, sd, replicates, infeasible."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario", "variant", "m", "metric", "mean", "sd", "replicates", "infeasible"])
        for m in res.m_grid:
            for name in res.variants:
                c = res.cells[(name, m)]
                for k in METRICS:
                    w.writerow([res.scenario_id, name, m, k, _fmt(c.mean[k]), _fmt(c.sd[k]),
                                c.n_feasible, c.n_infeasible])


def write_wide_tables(res: BenchmarkResult, directory, m=None) -> list:
    """One CSV per metric: rows are variants, the column is the scenario at ``m``.

    ``m`` defaults to the largest grid value. Returns the written paths.
    """
    m = max(res.m_grid) if m is None else m
    out = []
    for k in METRICS:
        p = Path(directory) / f"table_{k}.csv"
        with p.open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variant", res.scenario_id])
            for name in res.variants:
                w.writerow([name, _fmt(res.cells[(name, m)].mean[k])])
        out.append(p)
    return out


def write_timings(res: BenchmarkResult, path) -> None:
    """Per-fit wall time; kept apart so the other outputs stay reproducible."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["variant", "m", "replicate", "seconds"])
        for r in res.records:
            w.writerow([r.variant, r.m, r.replicate, f"{r.seconds:.6f}"])


def write_replicates_json(res: BenchmarkResult, path) -> None:
    rows = []
    for r in res.records:
        row = {"variant": r.variant, "m": r.m, "replicate": r.replicate, "seed": r.seed,
               "infeasible": r.infeasible}
        if r.infeasible:
            row["reason"] = r.reason
        else:
            row.update({k: getattr(r.metrics, k) for k in METRICS})
        rows.append(row)
    Path(path).write_text(json.dumps(rows, indent=1) + "\n")


def format_summary(res: BenchmarkResult) -> str:
    lines = [f"scenario {res.scenario_id}, {res.replicates} replicates, base seed {res.base_seed}",
             f"{'variant':<12} {'m':>5} " + " ".join(f"{k:>8}" for k in METRICS) + "  infeasible"]
    for m in res.m_grid:
        for name in res.variants:
            c = res.cells[(name, m)]
            vals = " ".join(f"{c.mean[k]:8.4f}" if c.mean[k] is not None else f"{'-':>8}"
                            for k in METRICS)
            lines.append(f"{name:<12} {m:>5} {vals}  {c.n_infeasible}")
    return "\n".join(lines)
