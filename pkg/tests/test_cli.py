import csv

import numpy as np
import pytest

from fxt_multirate.cli import EXIT_CONFIG, EXIT_FAILURE, EXIT_OK, export_csv, intervals_path, main, trajectory_header
from fxt_multirate.sim import run_scenario

from conftest import SCENARIO_DIR, scenario

TOY = str(SCENARIO_DIR / "toy1d.cfg")


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_run_writes_csv_and_report(tmp_path):
    assert main(["--config", TOY, "--out", str(tmp_path)]) == EXIT_OK
    rows = _rows(tmp_path / "trajectory.csv")
    assert rows[0] == trajectory_header(1, 1)
    assert len(rows) - 1 == 1 * 2000 + 1
    report = dict(line.split("=", 1) for line in (tmp_path / "report.txt").read_text().splitlines())
    assert report["periodic_safety"] == "true"
    assert (tmp_path / "trajectory_intervals.csv").exists()


def test_csv_h_recomputed_from_columns(tmp_path):
    cfg = scenario("doubleint", ["sim.n_intervals=2"])
    log, _ = run_scenario(cfg)
    export_csv(log, tmp_path / "t.csv")
    rows = _rows(tmp_path / "t.csv")
    head, data = rows[0], np.array([[float(v) if v not in ("true", "false", "") else np.nan for v in r]
                                    for r in rows[1:]])
    x = data[:, [head.index("x0"), head.index("x1")]]
    z = data[:, [head.index("z0"), head.index("z1")]]
    h = 0.5 * cfg.c ** 2 - 0.5 * np.sum((x - z) ** 2, axis=1)
    np.testing.assert_allclose(data[:, head.index("h")], h, rtol=0, atol=1e-9)
    assert len(data) == 2 * cfg.ticks_per_interval + 1


def test_empty_horizon_is_header_only(tmp_path):
    assert main(["--config", TOY, "--out", str(tmp_path), "--set", "sim.n_intervals=0"]) == EXIT_OK
    assert len(_rows(tmp_path / "trajectory.csv")) == 1
    assert len(_rows(intervals_path(tmp_path / "trajectory.csv"))) == 1


def test_infeasible_start_exit_code(tmp_path, capsys):
    code = main(["--config", TOY, "--out", str(tmp_path), "--set", "sim.x0=50"])
    assert code == EXIT_FAILURE
    report = (tmp_path / "report.txt").read_text()
    assert "recursive feasibility hypothesis not met" in report
    assert "initial_feasible=false" in report


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[sim]\nx0 = 1\nspeed = 3\n")
    assert main(["--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "speed" in err and "line 3" in err


def test_unknown_override_exit_code(tmp_path, capsys):
    assert main(["--config", TOY, "--out", str(tmp_path), "--set", "sim.speed=1"]) == EXIT_CONFIG


def test_missing_config_flag(tmp_path, capsys):
    assert main(["--out", str(tmp_path)]) == EXIT_CONFIG


def test_unwritable_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["--config", TOY, "--out", str(blocker / "sub")]) == EXIT_CONFIG
    assert "I/O error" in capsys.readouterr().err


def test_export_reports_path(tmp_path):
    log, _ = run_scenario(scenario("toy1d", ["sim.n_intervals=0"]))
    with pytest.raises(OSError) as err:
        export_csv(log, tmp_path / "missing" / "t.csv")
    assert "t.csv" in str(err.value)


def test_verify_mode(tmp_path, capsys):
    assert main(["--config", TOY, "--out", str(tmp_path), "--mode", "verify"]) == EXIT_OK
    text = (tmp_path / "verify.txt").read_text()
    assert "initial_feasible=true" in text
    assert "trajectory.csv" not in {p.name for p in tmp_path.iterdir()}


def test_compare_mode_on_toy(tmp_path, capsys):
    assert main(["--config", TOY, "--out", str(tmp_path), "--mode", "compare"]) == EXIT_OK
    assert (tmp_path / "trajectory_fxt.csv").exists() and (tmp_path / "trajectory_esclf.csv").exists()
    assert "fxt: reached C1" in (tmp_path / "comparison.txt").read_text()


def test_selftest_mode(tmp_path, capsys):
    assert main(["--mode", "selftest", "--out", str(tmp_path), "--seed", "3"]) == EXIT_OK
    out = capsys.readouterr().out
    assert out.count("PASS") == 6


def test_seed_flag_sets_config_seed(tmp_path, monkeypatch):
    seen = {}

    def fake_run(cfg, out):
        seen["seed"] = cfg.seed
        return EXIT_OK
    monkeypatch.setattr("fxt_multirate.cli.mode_run", fake_run)
    main(["--config", TOY, "--out", str(tmp_path), "--seed", "17"])
    assert seen["seed"] == 17


def test_log_level_from_environment(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("FXT_MULTIRATE_LOG", "info")
    assert main(["--config", TOY, "--out", str(tmp_path), "--mode", "verify"]) == EXIT_OK
