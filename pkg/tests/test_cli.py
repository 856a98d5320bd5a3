import csv
import hashlib
import io
import json
import subprocess
import sys

import pytest

from shiftlab import bench
from shiftlab.cli import main

EXAMPLE = {
    "scenario": {"preset": "covariate_1d", "sigma_T": 1.5},
    "methods": ["kmm", "unweighted"],
    "trials": 20,
    "seed": 42,
}


def write_cfg(path, cfg):
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def det_hash(path):
    report = json.loads(path.read_text())
    return hashlib.sha256(bench.deterministic_json(report).encode()).hexdigest()


@pytest.fixture(scope="module")
def example_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    cfg = write_cfg(root / "cfg.json", EXAMPLE)
    assert main(["bench", "--config", cfg, "--out", str(root / "a")]) == 0
    return root, cfg


def test_bench_rows_and_determinism(example_run):
    root, cfg = example_run
    report = json.loads((root / "a" / "report.json").read_text())
    recs = report["deterministic"]["records"]
    assert len(recs) == 40
    assert sorted({r["method"] for r in recs}) == ["kmm", "unweighted"]
    assert main(["bench", "--config", cfg, "--out", str(root / "b")]) == 0
    assert det_hash(root / "a" / "report.json") == det_hash(root / "b" / "report.json")
    rows = list(csv.DictReader(io.StringIO((root / "a" / "report.csv").read_text())))
    assert len(rows) == 40


def test_parallel_equals_sequential(example_run):
    root, cfg = example_run
    assert main(["bench", "--config", cfg, "--out", str(root / "p"), "--parallel", "3"]) == 0
    assert det_hash(root / "a" / "report.json") == det_hash(root / "p" / "report.json")


def test_aggregates_recomputable(example_run):
    root, _ = example_run
    det = json.loads((root / "a" / "report.json").read_text())["deterministic"]
    recs = [r for r in det["records"] if r["method"] == "kmm"]
    mean = sum(r["target_risk"] for r in recs) / len(recs)
    assert abs(det["aggregate"]["kmm|n=500"]["target_risk"]["mean"] - mean) <= 1e-12


def test_seed_override_changes_draws(example_run, tmp_path):
    _, cfg = example_run
    small = dict(EXAMPLE, trials=1)
    cfg = write_cfg(tmp_path / "c.json", small)
    assert main(["bench", "--config", cfg, "--out", str(tmp_path / "x")]) == 0
    assert main(["bench", "--config", cfg, "--out", str(tmp_path / "y"), "--seed", "7"]) == 0
    assert det_hash(tmp_path / "x" / "report.json") != det_hash(tmp_path / "y" / "report.json")


def test_malformed_json_names_offset(tmp_path, capsys):
    p = tmp_path / "bad.json"
    p.write_text('{"trials": 2,, "seed": 1}')
    assert main(["bench", "--config", str(p)]) == 2
    assert "byte offset 13" in capsys.readouterr().err


def test_misspelled_method_lists_registry(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", dict(EXAMPLE, methods=["kmn"]))
    assert main(["bench", "--config", cfg]) == 2
    err = capsys.readouterr().err
    assert "kmn" in err and "kmm" in err and "kliep" in err


def test_io_error_exit(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write_cfg(tmp_path / "c.json", dict(EXAMPLE, trials=1))
    assert main(["generate", "--config", cfg, "--out", str(blocker / "sub")]) == 4
    assert main(["bench", "--config", str(tmp_path / "missing.json")]) == 4


def test_method_failure_exit(tmp_path, capsys):
    cfg = dict(EXAMPLE, trials=1, methods=[{"name": "tca", "params": {"d": 10_000}}])
    assert main(["bench", "--config", write_cfg(tmp_path / "c.json", cfg)]) == 3
    err = capsys.readouterr().err
    assert "tca" in err and "trial 0" in err


def test_subcommands_write_outputs(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", dict(EXAMPLE, trials=1, n=200, m=200))
    out = tmp_path / "o"
    assert main(["generate", "--config", cfg, "--out", str(out)]) == 0
    assert {"source.csv", "target.csv", "scenario.json"} <= {p.name for p in out.iterdir()}
    assert main(["weights", "--config", cfg, "--out", str(out), "--method", "kmm"]) == 0
    assert main(["adapt", "--config", cfg, "--out", str(out), "--method", "unweighted"]) == 0
    assert main(["discrepancy", "--config", cfg, "--out", str(out)]) == 0
    assert main(["bounds", "--config", cfg, "--out", str(out)]) == 0
    adapt = json.loads((out / "adapt.json").read_text())
    assert adapt["method"] == "unweighted" and 0 <= adapt["target_risk"] <= 1
    bounds = json.loads((out / "bounds.json").read_text())
    # sigma_T^2 = 2.25 > 2: the order-2 divergence is infinite and the IW bound void
    assert bounds["inputs"]["d2"] == "inf" and bounds["cortes_iw"] == "inf"


def test_csv_input_round_trip(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", dict(EXAMPLE, trials=1, n=100, m=100))
    main(["generate", "--config", cfg, "--out", str(tmp_path)])
    csv_cfg = {"source_csv": "source.csv", "target_csv": "target.csv", "methods": ["kliep", "unweighted"]}
    cfg2 = write_cfg(tmp_path / "csv.json", csv_cfg)
    assert main(["bench", "--config", cfg2, "--out", str(tmp_path / "r")]) == 0


def test_plotdata_schemas(example_run, tmp_path):
    root, _ = example_run
    report = json.loads((root / "a" / "report.json").read_text())
    text = bench.emit_plot_data(report, "weights-vs-true")
    assert text.splitlines()[0] == "x,true_weight,estimated_weight,method"
    text = bench.emit_plot_data(report, "risk-vs-n")
    rows = list(csv.DictReader(io.StringIO(text)))
    assert len(rows) == 40
    assert {(r["n"], r["method"], r["trial"]) for r in rows}.__len__() == 40
    with pytest.raises(bench.MissingSeriesError):
        bench.emit_plot_data(report, "bound-vs-gap")
    out = tmp_path / "plots"
    assert main(["plotdata", "--report", str(root / "a" / "report.json"), "--kind", "risk-vs-n", "--out", str(out)]) == 0
    assert (out / "risk-vs-n.csv").exists()


def test_bound_vs_gap(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", dict(EXAMPLE, trials=2, n=200, m=200, bounds=True))
    assert main(["bench", "--config", cfg, "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "report.json").read_text())
    header = bench.emit_plot_data(report, "bound-vs-gap").splitlines()[0]
    assert header == "method,trial,n,realized_gap,cortes_bound,ben_david"


def test_empty_report_missing_series(tmp_path):
    for kind in bench.PLOT_KINDS:
        with pytest.raises(bench.MissingSeriesError):
            bench.emit_plot_data({}, kind)
    p = tmp_path / "empty.json"
    p.write_text("{}")
    assert main(["plotdata", "--report", str(p), "--kind", "risk-vs-n"]) == 2


def test_usage_errors():
    assert main([]) == 2
    assert main(["bench"]) == 2


def test_console_entry(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "shiftlab.cli", "plotdata", "--report", str(tmp_path / "nope.json"), "--kind", "risk-vs-n"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 4
