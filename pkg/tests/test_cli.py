import csv
import json
from pathlib import Path

import numpy as np
import pytest

from pcm import default_spec, generate
from pcm.cli import main, read_dataset_csv, write_dataset_csv


def run_cli(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data_2k(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "trial.csv"
    assert run_cli("generate", "--out", path, "--n", 2000, "--seed", 5) == 0
    return path


def fit_2k(tmp_path, data_2k, *extra):
    report = tmp_path / "report.json"
    assigns = tmp_path / "assignments.csv"
    code = run_cli("fit", "--data", data_2k, "--out-report", report,
                   "--out-assignments", assigns, *extra)
    return code, report, assigns


def test_generate_line_count(tmp_path):
    out = tmp_path / "d.csv"
    assert run_cli("generate", "--out", out, "--n", 100) == 0
    assert len(out.read_text().splitlines()) == 101


def test_generate_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli("generate", "--out", a, "--n", 500, "--seed", 9)
    run_cli("generate", "--out", b, "--n", 500, "--seed", 9)
    assert a.read_bytes() == b.read_bytes()


def test_generate_rejects_zero_n(tmp_path):
    assert run_cli("generate", "--out", tmp_path / "x.csv", "--n", 0) == 2


def test_generate_io_failure(tmp_path):
    missing_dir = tmp_path / "nope" / "x.csv"
    assert run_cli("generate", "--out", missing_dir, "--n", 10) == 3


def test_round_trip_bit_exact(tmp_path):
    spec = default_spec(n=500, seed=21, sigma=5.0)
    ds = generate(spec)
    path = tmp_path / "rt.csv"
    write_dataset_csv(path, ds)
    back = read_dataset_csv(path)
    for field in ("x", "t", "y", "ybar", "c_true"):
        assert getattr(back, field).tobytes() == getattr(ds, field).tobytes()


def test_spec_dump_parses(tmp_path):
    out = tmp_path / "spec.json"
    assert run_cli("spec", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["d"] == 2 and len(doc["regions"]) == 4


def test_fit_writes_report_and_assignments(tmp_path, data_2k):
    code, report, assigns = fit_2k(tmp_path, data_2k, "--cf", "given")
    assert code == 0
    doc = json.loads(report.read_text())
    assert doc["ell_hat"] >= 1
    assert len(doc["mu_hat"]) == doc["ell_hat"]
    assert doc["diagnostics"]["n_fit"] == 2000
    with open(assigns) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["index", "level", "smoothed_ite"]
    assert len(rows) == 2001


def test_fit_kmeans_mode(tmp_path, data_2k):
    code, report, _ = fit_2k(tmp_path, data_2k, "--cf", "given",
                             "--precluster", "kmeans", "--seed", 3)
    assert code == 0
    assert json.loads(report.read_text())["diagnostics"]["precluster_mode"] == "kmeans"


def test_fit_given_requires_ybar_column(tmp_path):
    path = tmp_path / "noybar.csv"
    path.write_text("x1,x2,t,y\n0.5,0.5,1,1.0\n0.6,0.4,0,0.5\n")
    code = run_cli("fit", "--data", path, "--out-report", tmp_path / "r.json",
                   "--out-assignments", tmp_path / "a.csv", "--cf", "given")
    assert code == 2


def test_fit_deterministic_reports(tmp_path, data_2k):
    _, r1, a1 = fit_2k(tmp_path, data_2k, "--cf", "given")
    doc1 = json.loads(r1.read_text())
    sub = tmp_path / "again"
    sub.mkdir()
    _, r2, a2 = fit_2k(sub, data_2k, "--cf", "given")
    doc2 = json.loads(r2.read_text())
    doc1["diagnostics"].pop("timings_ms")
    doc2["diagnostics"].pop("timings_ms")
    assert doc1 == doc2
    assert a1.read_bytes() == a2.read_bytes()


def test_eval_zero_noise_mae_zero(tmp_path):
    data = tmp_path / "d.csv"
    spec_path = tmp_path / "spec.json"
    run_cli("spec", "--out", spec_path)
    doc = json.loads(spec_path.read_text())
    doc["sigma"] = 0.0
    spec_path.write_text(json.dumps(doc))
    run_cli("generate", "--spec", spec_path, "--out", data, "--n", 20000,
            "--seed", 2)
    report = tmp_path / "r.json"
    assigns = tmp_path / "a.csv"
    run_cli("fit", "--data", data, "--out-report", report,
            "--out-assignments", assigns, "--cf", "given")
    out = tmp_path / "eval.json"
    conf = tmp_path / "confusion.csv"
    hist = tmp_path / "hist.csv"
    effects = tmp_path / "effects.csv"
    code = run_cli("eval", "--data", data, "--report", report,
                   "--assignments", assigns, "--out", out,
                   "--true-mu", "0,1,2", "--out-confusion", conf,
                   "--out-histogram", hist, "--out-effects", effects)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["mae"]["mean"] < 0.1
    assert doc["ell_hat"] == 3
    assert doc["bayes"]["mae_raw"]["mean"] == pytest.approx(0.0, abs=1e-12)
    assert 0.8 <= doc["homogeneity"] <= 1.0
    with open(hist) as fh:
        hist_rows = list(csv.reader(fh))
    assert len(hist_rows) == 101
    with open(conf) as fh:
        conf_rows = list(csv.reader(fh))
    assert len(conf_rows) == 4
    with open(effects) as fh:
        eff_rows = list(csv.reader(fh))
    assert eff_rows[0] == ["level", "mu_hat", "n_subjects", "true_mu"]


def test_eval_without_true_mu_estimates_effects(tmp_path, data_2k):
    _, report, assigns = fit_2k(tmp_path, data_2k, "--cf", "given")
    out = tmp_path / "eval.json"
    code = run_cli("eval", "--data", data_2k, "--report", report,
                   "--assignments", assigns, "--out", out)
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["true_mu_estimated"] is True
    assert "bayes" not in doc  # baseline only with explicit --true-mu


def test_eval_rejects_mismatched_rows(tmp_path, data_2k):
    _, report, assigns = fit_2k(tmp_path, data_2k, "--cf", "given")
    other = tmp_path / "other.csv"
    run_cli("generate", "--out", other, "--n", 1999, "--seed", 5)
    code = run_cli("eval", "--data", other, "--report", report,
                   "--assignments", assigns, "--out", tmp_path / "e.json")
    assert code == 2


def test_eval_requires_c_true(tmp_path, data_2k):
    _, report, assigns = fit_2k(tmp_path, data_2k, "--cf", "given")
    stripped = tmp_path / "stripped.csv"
    with open(data_2k) as fh:
        rows = list(csv.reader(fh))
    ci = rows[0].index("c_true")
    with open(stripped, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in rows:
            writer.writerow(row[:ci] + row[ci + 1:])
    code = run_cli("eval", "--data", stripped, "--report", report,
                   "--assignments", assigns, "--out", tmp_path / "e.json")
    assert code == 2


def test_sweep_grid_and_summary(tmp_path):
    out_dir = tmp_path / "sweep"
    code = run_cli("sweep", "--out-dir", out_dir, "--n-grid", "4096,8192",
                   "--seeds", "2", "--modes", "box,kmeans", "--cf", "given")
    assert code == 0
    with open(out_dir / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 8
    for row in rows:
        assert row["error"] == ""
        assert float(row["wall_ms"]) > 0
        assert row["ell_hat"] != ""
        assert 0.0 <= float(row["homogeneity"]) <= 1.0
    cells = list((out_dir / "cells").glob("*_report.json"))
    assert len(cells) == 8


def test_sweep_records_partial_failures(tmp_path):
    out_dir = tmp_path / "sweep"
    code = run_cli("sweep", "--out-dir", out_dir, "--n-grid", "2,4096",
                   "--seeds", "1", "--modes", "box", "--cf", "given")
    assert code == 0  # one cell fails (n=2 below the grid minimum)
    with open(out_dir / "summary.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2
    failed = [r for r in rows if r["error"]]
    assert len(failed) == 1 and failed[0]["n"] == "2"


def test_sweep_reproducible(tmp_path):
    dirs = []
    for name in ("s1", "s2"):
        out_dir = tmp_path / name
        run_cli("sweep", "--out-dir", out_dir, "--n-grid", "4096",
                "--seeds", "1", "--modes", "box", "--cf", "given")
        with open(out_dir / "summary.csv") as fh:
            rows = list(csv.DictReader(fh))
        rows[0].pop("wall_ms")
        dirs.append(rows)
    assert dirs[0] == dirs[1]


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("--version")
    assert exc.value.code == 0
    assert capsys.readouterr().out.strip()


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as exc:
        run_cli("fit")  # missing required flags
    assert exc.value.code == 2
