import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from robout.evaluation import (
    METRICS,
    f1_score,
    format_summary,
    outlier_metrics,
    parse_m_grid,
    predictor_metrics,
    replicate_seed,
    run_benchmark,
    write_long_csv,
    write_replicates_json,
    write_timings,
    write_wide_tables,
)
from robout.pipeline import RoboutVariant
from robout.simulate import ScenarioConfig

MM = RoboutVariant("huber", "mm")
LTS = RoboutVariant("huber", "lts")


def test_outlier_metric_examples():
    mr, sr, f1 = outlier_metrics({1, 2, 3}, {2, 3, 4})
    assert (mr, sr, f1) == pytest.approx((1 / 3, 1 / 3, 2 / 3))
    assert outlier_metrics({1, 2}, {1, 2}) == (0.0, 0.0, 1.0)
    assert outlier_metrics({1, 2}, set()) == (1.0, 0.0, 0.0)
    assert outlier_metrics(set(), {4}) == (None, 1.0, None)


def test_outlier_metrics_range_check():
    with pytest.raises(ValueError):
        outlier_metrics({1}, {7}, n=5)


def test_predictor_metric_examples():
    assert predictor_metrics({1, 2, 3}, {1, 2, 3}) == (0, 0, 0.0)
    assert predictor_metrics({1, 2, 3}, {1, 2, 9}) == (1, 1, 1.0)


@given(st.floats(0, 1), st.floats(0, 1))
def test_f1_symmetric_and_bounded(a, b):
    assert f1_score(a, b) == pytest.approx(f1_score(b, a))
    assert 0.0 <= f1_score(a, b) <= 1.0
    assert f1_score(1.0, 1.0) == 0.0


@given(st.sets(st.integers(0, 49)), st.sets(st.integers(0, 49)), st.permutations(range(50)))
def test_metrics_permutation_invariant(O, F, perm):
    a = outlier_metrics(O, F, 50)
    b = outlier_metrics({perm[i] for i in O}, {perm[i] for i in F}, 50)
    assert a == b


@pytest.mark.parametrize("spec, expected", [
    ("3:2:19", [3, 5, 7, 9, 11, 13, 15, 17, 19]),
    ("19", [19]),
    ("1,2.5", [1, 2.5]),
    ("1:0.5:2", [1, 1.5, 2]),
])
def test_parse_m_grid(spec, expected):
    assert parse_m_grid(spec) == expected


@pytest.mark.parametrize("spec", ["3:2", "5:1:3", "0.5", "3:0:5"])
def test_parse_m_grid_rejects(spec):
    with pytest.raises(ValueError):
        parse_m_grid(spec)


def test_replicate_seed():
    assert [replicate_seed(5, r) for r in range(3)] == [5, 4, 7]


@pytest.fixture(scope="module")
def small_bench():
    return run_benchmark("1b", [LTS, MM], m_grid=[5, 19], replicates=4, base_seed=3)


def test_benchmark_aggregation(small_bench):
    res = small_bench
    assert res.seeds == [3, 2, 1, 0] and len(res.records) == 2 * 2 * 4
    for (name, m), cell in res.cells.items():
        assert cell.n_feasible + cell.n_infeasible == res.replicates
        for k in METRICS:
            v = res.values(name, m, k)
            assert cell.mean[k] == pytest.approx(v.mean(), abs=1e-12)
            assert v.min() <= cell.mean[k] <= v.max()


def test_benchmark_is_deterministic(small_bench):
    again = run_benchmark("1b", [LTS, MM], m_grid=[5, 19], replicates=4, base_seed=3)
    assert again.cells == small_bench.cells


def test_benchmark_thread_count_does_not_matter(small_bench):
    par = run_benchmark("1b", [LTS, MM], m_grid=[5, 19], replicates=4, base_seed=3, threads=2)
    assert par.cells == small_bench.cells


def test_benchmark_writers(small_bench, tmp_path):
    write_long_csv(small_bench, tmp_path / "long.csv")
    rows = list(csv.DictReader((tmp_path / "long.csv").open()))
    assert len(rows) == 2 * 2 * len(METRICS)
    assert rows[0].keys() >= {"scenario", "variant", "m", "metric", "mean", "sd", "replicates"}
    paths = write_wide_tables(small_bench, tmp_path)
    table = list(csv.reader(paths[0].open()))
    assert table[0] == ["variant", "1b"] and [r[0] for r in table[1:]] == ["SNCD-H+LTS", "SNCD-H+MM"]
    write_timings(small_bench, tmp_path / "t.csv")
    write_replicates_json(small_bench, tmp_path / "r.json")
    assert "SNCD-H+MM" in format_summary(small_bench)


def test_infeasible_replicates_are_counted():
    # 4 rows leave GS short of two rows beyond the support while LTS still fits
    cfg = ScenarioConfig(n=4, p=5, K=3, alpha=0.25)
    res = run_benchmark(cfg, [RoboutVariant("huber", "gs"), LTS], replicates=3)
    gs = res.cell("SNCD-H+GS", 19)
    assert gs.n_infeasible == 3 and gs.mean["mr"] is None
    assert res.cell("SNCD-H+LTS", 19).n_feasible == 3


def test_null_grid_point_masks_almost_everything():
    res = run_benchmark("1a", [MM], m_grid=[1], replicates=3)
    c = res.cell("SNCD-H+MM", 1)
    assert c.mean["mr"] > 0.9 and c.mean["f1"] < 0.2


@pytest.mark.parametrize("sid", ["1a", "3a"])
def test_masking_falls_with_m(sid):
    # reduced replicate count; the trend is large relative to the noise
    res = run_benchmark(sid, [MM], m_grid=[3, 19], replicates=20, base_seed=1)
    assert res.cell("SNCD-H+MM", 19).mean["mr"] <= res.cell("SNCD-H+MM", 3).mean["mr"]
