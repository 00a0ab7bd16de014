import csv
import json

import numpy as np
import pytest

from robout.cli import EXIT_ERROR, EXIT_INFEASIBLE, EXIT_OK, build_parser, main


@pytest.fixture
def sim_dir(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "--scenario", "2c", "--m", "7", "--seed", "11", "--out", str(out)]) == EXIT_OK
    return out


def test_simulate_2c(sim_dir):
    truth = json.loads((sim_dir / "truth.json").read_text())
    assert truth["config"]["n"] == 50 and truth["config"]["p"] == 500
    rows = list(csv.reader((sim_dir / "data.csv").open()))
    assert len(rows) == 51 and len(rows[0]) == 501
    X = np.array(rows[1:], dtype=float)[:, 1:]
    others = [j for j in range(500) if j not in truth["support"]]
    assert (X[:, others] == 0).sum() == round(0.3 * 50 * 497)
    assert (sim_dir / "config.json").exists()


def test_simulate_mean_shift(tmp_path):
    assert main(["simulate", "--scenario", "6b", "--m", "3", "--out", str(tmp_path)]) == EXIT_OK
    cfg = json.loads((tmp_path / "truth.json").read_text())["config"]
    assert cfg["outlier_mode"] == "mean" and cfg["m"] == 3.0


def test_simulate_custom(tmp_path):
    assert main(["simulate", "--n", "30", "--p", "8", "--gamma", "0.2", "--leverage",
                 "--out", str(tmp_path)]) == EXIT_OK
    cfg = json.loads((tmp_path / "truth.json").read_text())["config"]
    assert cfg["leverage"] and cfg["gamma"] == 0.2


def test_unknown_scenario_is_usage_error(tmp_path, capsys):
    assert main(["simulate", "--scenario", "9z", "--out", str(tmp_path)]) == EXIT_ERROR


def test_detect_writes_reports(sim_dir, tmp_path):
    out = tmp_path / "rpt"
    code = main(["detect", "--input", str(sim_dir / "data.csv"), "--response", "y",
                 "--variant", "sncd-h+mm", "--k", "3", "--alpha", "0.1", "--seed", "7",
                 "--out", str(out)])
    assert code == EXIT_OK
    rec = json.loads((out / "sncd-h_mm_k3.json").read_text())
    assert rec["variant"] == "SNCD-H+MM" and len(rec["selection"]["support"]) == 3
    assert len(list(csv.reader((out / "sncd-h_mm_k3.csv").open()))) == 51
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["seed"] == 7 and cfg["variant"] == "sncd-h+mm"


def test_detect_missing_response(sim_dir, tmp_path, capsys):
    code = main(["detect", "--input", str(sim_dir / "data.csv"), "--response", "income",
                 "--out", str(tmp_path / "x")])
    assert code == EXIT_ERROR
    assert "income" in capsys.readouterr().err


def test_detect_missing_file(tmp_path):
    assert main(["detect", "--input", str(tmp_path / "nope.csv"), "--response", "y",
                 "--out", str(tmp_path / "x")]) == EXIT_ERROR


def _small_csv(path, n, p, seed=0):
    g = np.random.default_rng(seed)
    X = g.standard_normal((n, p))
    y = X[:, :2] @ [1.0, 2.0] + 0.1 * g.standard_normal(n)
    with path.open("w") as fh:
        fh.write(",".join(["y"] + [f"x{j}" for j in range(p)]) + "\n")
        for i in range(n):
            fh.write(",".join(repr(float(v)) for v in [y[i], *X[i]]) + "\n")
    return path


def test_detect_partial_feasibility(tmp_path, capsys):
    # 3 rows with support size 2: GS needs two rows beyond the support, LTS and MM do not
    f = _small_csv(tmp_path / "d.csv", 3, 5)
    code = main(["detect", "--input", str(f), "--response", "y", "--variant", "all", "--k", "2",
                 "--out", str(tmp_path / "o")])
    assert code == EXIT_OK
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    bad = {r["variant"] for r in summary if r.get("infeasible")}
    assert bad == {"SNCD-H+GS", "SNCD-Q+GS"}
    assert "infeasible" in capsys.readouterr().out


def test_detect_total_infeasibility(tmp_path):
    f = _small_csv(tmp_path / "d.csv", 3, 5)
    code = main(["detect", "--input", str(f), "--response", "y", "--variant", "sncd-h+gs",
                 "--k", "2", "--out", str(tmp_path / "o")])
    assert code == EXIT_INFEASIBLE


def test_benchmark_smoke(tmp_path):
    out = tmp_path / "bench"
    code = main(["benchmark", "--scenario", "1b", "--variants", "sncd-h+lts,sncd-h+mm",
                 "--m-grid", "3:8:19", "--replicates", "2", "--seed", "1", "--out", str(out)])
    assert code == EXIT_OK
    rows = list(csv.DictReader((out / "long.csv").open()))
    assert {r["m"] for r in rows} == {"3", "11", "19"}
    assert (out / "table_f1.csv").exists() and not (out / "timings.csv").exists()
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["replicate_seeds"] == [1, 0]


def test_benchmark_5b_uses_correlated_preset(tmp_path):
    out = tmp_path / "b5"
    assert main(["benchmark", "--scenario", "5b", "--variants", "sncd-h+lts", "--m-grid", "19",
                 "--replicates", "1", "--timings", "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "config.json").read_text())["resolved"]["rho"] == 0.7
    assert (out / "timings.csv").exists()


def test_parser_defaults():
    args = build_parser().parse_args(["benchmark", "--out", "x"])
    assert args.m_grid == "3:2:19" and args.replicates == 100 and args.variants == "all"
    args = build_parser().parse_args(["detect", "--input", "a", "--response", "y", "--out", "x"])
    assert args.k == [3] and args.alpha == 0.1


def test_bad_variant_is_usage_error(sim_dir, tmp_path):
    assert main(["detect", "--input", str(sim_dir / "data.csv"), "--response", "y",
                 "--variant", "sncd-z+mm", "--out", str(tmp_path / "x")]) == EXIT_ERROR
