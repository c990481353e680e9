import json
import subprocess
import sys

import pytest

from titepod.cli import main

HISTORY_42 = [
    {"dose": 1, "dlt": False},
    {"dose": 1, "dlt": False},
    {"dose": 1, "dlt": False},
    {"dose": 2, "dlt": False},
    {"dose": 2, "dlt": False},
    {"dose": 2, "dlt": True},
]


@pytest.fixture
def history_file(tmp_path):
    path = tmp_path / "history.jsonl"
    path.write_text("\n".join(json.dumps(row) for row in HISTORY_42) + "\n")
    return path


def test_decide_mtpi2_worked_example(history_file, capsys):
    assert main(["decide", str(history_file), "--design", "mtpi2"]) == 0
    out = capsys.readouterr().out
    assert "dose 1" in out


def test_decide_crm_worked_example(history_file, capsys):
    assert main(["decide", str(history_file), "--design", "crm"]) == 0
    out = capsys.readouterr().out
    assert "dose 2" in out


def test_decide_empty_history_starts_low(tmp_path, capsys):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert main(["decide", str(path), "--design", "mtpi2"]) == 0
    assert "start at dose 1" in capsys.readouterr().out


def test_decide_prints_pod(history_file, capsys):
    assert main(["decide", str(history_file), "--design", "pod-tpi"]) == 0
    out = capsys.readouterr().out
    assert "probability of decision" in out


def test_calibrate_reference_values(capsys):
    assert main(["calibrate", "--p", "0.3", "--split", "14", "--late", "0.5"]) == 0
    out = capsys.readouterr().out
    assert "shape: 1.134" in out
    assert "scale: 69.49" in out or "scale: 69.50" in out


def test_calibrate_rejects_degenerate(capsys):
    assert main(["calibrate", "--p", "1.0", "--split", "14", "--late", "0.5"]) == 2


def test_simulate_writes_deterministic_table(tmp_path):
    args = [
        "simulate", "--design", "tite-boin", "--scenario", "3",
        "--n-sims", "5", "--seed", "7", "--setting", "1",
    ]
    out1 = tmp_path / "a.csv"
    out2 = tmp_path / "b.csv"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    header = out1.read_text().splitlines()[0]
    assert header == "scenario,PCS,PCA,POS,POA,POT,DS,DE,SE,Dur,PCS_se,Dur_se"


def test_simulate_unknown_design_is_config_error(capsys):
    assert main(["simulate", "--design", "nope", "--n-sims", "1"]) == 2


def test_simulate_missing_design_is_usage_error():
    with pytest.raises(SystemExit) as err:
        main(["simulate", "--n-sims", "1"])
    assert err.value.code == 2


def test_simulate_bad_scenario_file(tmp_path, capsys):
    bad = tmp_path / "scenario.yaml"
    bad.write_text("doses: [0.1, 0.2]\ntarget: 0.2\n")
    code = main([
        "simulate", "--design", "tite-boin", "--scenario-file", str(bad), "--n-sims", "1",
    ])
    assert code == 2


def test_simulate_scenario_file_roundtrip(tmp_path):
    doc = tmp_path / "scenario.yaml"
    doc.write_text(
        "name: demo\ndoses: [0.05, 0.2, 0.4, 0.5, 0.6, 0.7, 0.8]\ntarget: 0.2\n"
    )
    out = tmp_path / "table.csv"
    code = main([
        "simulate", "--design", "mtpi2", "--scenario-file", str(doc),
        "--n-sims", "3", "--seed", "1", "--out", str(out),
    ])
    assert code == 0
    assert "demo" in out.read_text()


def test_report_ranks_tables(tmp_path, capsys):
    t1 = tmp_path / "one.csv"
    main([
        "simulate", "--design", "tite-boin", "--scenario", "3",
        "--n-sims", "4", "--seed", "3", "--out", str(t1),
    ])
    assert main(["report", str(t1)]) == 0
    out = capsys.readouterr().out
    assert out.startswith("loss,table")


def test_console_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "titepod.cli", "calibrate", "--p", "0.3",
         "--split", "14", "--late", "0.5"],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert "shape" in proc.stdout
