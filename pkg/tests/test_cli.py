import os

import pytest

from impactnet.cli import load_config, main
from impactnet.evaluation import load_report
from impactnet.export import read_manifest

from conftest import run_pipeline


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    out = tmp_path_factory.mktemp("pipe")
    os.environ.setdefault("SOURCE_DATE_EPOCH", "1600000000")
    return out, run_pipeline(out)


def test_simulate_writes_events_and_manifest(tmp_path):
    assert main(["simulate", "--true", "10", "--false", "10", "--seed", "1",
                 "--out", str(tmp_path)]) == 0
    assert len(os.listdir(tmp_path / "events")) == 20
    rows = read_manifest(tmp_path / "manifest.csv")
    assert [r["label"] for r in rows].count("TrueImpact") == 10


def test_full_pipeline_exits_zero(pipeline):
    out, results = pipeline
    assert [code for _, code in results] == [0] * len(results)
    for name in ["mignet.model", "svm.model", "split.txt", "predictions.csv",
                 "report-table.txt", "svm-selection.txt", "mignet-train.txt"]:
        assert (out / name).is_file(), name
    assert (out / "package").is_dir()


def test_reports_are_consistent_and_held_out(pipeline):
    out, _ = pipeline
    for name, model in [("report-mignet.txt", "MiGNet"), ("report-svm.txt", "SVM")]:
        (report,) = load_report(out / name)
        assert report.is_consistent()
        assert report.model_name == model
        assert report.matrix.n_positive == 5 and report.matrix.n_negative == 5
    table = (out / "report-table.txt").read_text().splitlines()
    refs = {line.split("  size")[0].split("  ")[0] + " " + line.split()[2]: line
            for line in table if line.startswith("Test ")}
    assert "split tp=56 fn=9 fp=6 tn=94" in refs["Test 1 SVM"]
    assert "split tp=63 fn=2 fp=10 tn=90" in refs["Test 1 MiGNet"]
    assert "split INCONSISTENT" in refs["Test 2 MiGNet"]
    assert "total INCONSISTENT" not in refs["Test 2 MiGNet"]


def test_predictions_cover_every_event(pipeline):
    out, _ = pipeline
    rows = read_manifest(out / "predictions.csv")
    assert len(rows) == 30
    assert all(r["predicted"] in ("TrueImpact", "NonContact") for r in rows)


def test_run_file_records_and_replays(pipeline, tmp_path):
    out, _ = pipeline
    run = (out / "runs" / "split.run").read_text()
    assert run.startswith("# run=")
    assert "command=split" in run and "seed=3" in run
    cfg = load_config(str(out / "runs" / "split.run"))
    assert cfg.epochs == 2
    assert f"config_hash={cfg.digest()}" in run
    # replay the split with the recorded config: same split file
    code = main(["split", "--windows", str(out / "windows"), "--out", str(tmp_path),
                 "--seed", "3", "--config", str(out / "runs" / "split.run")])
    assert code == 0
    assert (tmp_path / "split.txt").read_bytes() == (out / "split.txt").read_bytes()


@pytest.mark.parametrize("argv", [
    ["evaluate"],                        # --model is required
    ["frobnicate"],
    ["simulate", "--true", "x", "--false", "1"],
    [],
])
def test_usage_errors_exit_2(argv, tmp_path):
    assert main(argv + ["--out", str(tmp_path)] if argv else argv) == 2


def test_invalid_value_exits_2(tmp_path):
    assert main(["simulate", "--true", "-1", "--false", "1", "--out", str(tmp_path)]) == 2


def test_bad_config_exits_2(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 1\n")
    assert main(["simulate", "--true", "1", "--false", "1", "--out", str(tmp_path),
                 "--config", str(cfg)]) == 2


def test_missing_input_exits_3(tmp_path):
    assert main(["ingest", "--events", str(tmp_path / "nope"), "--out", str(tmp_path)]) == 3


def test_version_exits_0(capsys):
    assert main(["--version"]) == 0
    assert "impactnet" in capsys.readouterr().out
