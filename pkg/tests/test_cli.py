import csv
import io
import json
import subprocess
import sys

import pytest

from onebit_mimo.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main

FAST = ["--preset", "quick", "--trials", "2", "--m", "1"]


def test_complexity_stdout(capsys):
    assert main(["complexity"]) == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(capsys.readouterr().out)))
    pts = {(r["label"], r["x"]): float(r["y"]) for r in rows}
    assert pts[("LraLMS/M=3", "20.0")] == 6910560
    assert pts[("StandardLS/M=3", "20.0")] == 24798022400


def test_power_json(capsys):
    assert main(["power", "--format", "json", "--m", "1"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["curves"]["power/M=1"]["y"][0] == pytest.approx(803.62)


def test_out_directory(tmp_path, capsys):
    out = tmp_path / "res"
    assert main(["mse", *FAST, "--estimators", "lra_ls", "--out", str(out), "--seed", "3"]) == EXIT_OK
    path = out / "mse.csv"
    assert capsys.readouterr().out.strip() == str(path)
    assert path.read_text().startswith("x,y,stderr,n,label\n")


def test_worker_count_does_not_change_output(capsys):
    args = ["mse", *FAST, "--estimators", "lra_lmmse,standard_ls", "--trials", "12"]
    assert main(args + ["--workers", "1"]) == EXIT_OK
    one = capsys.readouterr().out
    assert main(args + ["--workers", "4"]) == EXIT_OK
    assert capsys.readouterr().out == one


@pytest.mark.parametrize("argv", [
    ["mse", "--estimators", "bogus"],
    ["mse", "--trials", "0"],
    ["mse", "--bogus-flag"],
    ["ser", "--estimators", "nope"],
    ["bias-check", "--estimators", "lra_lmmse"],
    ["mse", "--m", ""],
    ["mse", "--config", "/nonexistent/file.cfg"],
    ["mse", "--preset", "other"],
    ["mse", "--format", "xml"],
    [],
])
def test_config_errors_exit_2(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == EXIT_CONFIG


def test_numerical_failure_exit_3(monkeypatch):
    from onebit_mimo import harness

    def boom(cfg):
        raise FloatingPointError("diverged")

    monkeypatch.setattr(harness, "run_costs", boom)
    assert main(["complexity"]) == EXIT_NUMERIC


def test_io_failure_exit_1(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["complexity", "--out", str(blocker / "sub")]) == EXIT_IO


def test_console_module_entry():
    proc = subprocess.run([sys.executable, "-m", "onebit_mimo", "power", "--m", "2"], capture_output=True, text=True)
    assert proc.returncode == 0 and "power/M=2" in proc.stdout
    proc = subprocess.run([sys.executable, "-m", "onebit_mimo", "mse", "--trials", "-1"], capture_output=True, text=True)
    assert proc.returncode == 2 and "config error" in proc.stderr
