import csv

import numpy as np
import pytest

from invlqg import experiment
from invlqg.cli import main
from invlqg.config import ConfigError, ExperimentConfig, load_config, render_config, validate_config
from invlqg.experiment import KL_HEADER, PREDICTION_HEADER, SUMMARY_HEADER, TRIALS_HEADER, run_experiment
from invlqg.model import mixed_reference, save_reference_csv

MINIMAL = "trials_per_cell = 2\nalpha_sq = 1\nbeta_sq = 1\n"
SMALL = "trials_per_cell = 60\nalpha_sq = 1, 100\nbeta_sq = 100\nsegments = 2:1:0, 2:1:0.5\nlog_trials = true\n"


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.is_file()}


def test_empty_config_gives_defaults():
    assert validate_config("") == ExperimentConfig()
    cfg = validate_config("# only a comment\n")
    assert cfg.grid == [(a, b) for a in (1.0, 10.0, 100.0) for b in (1.0, 10.0, 100.0)]
    assert cfg.trials_per_cell == 500


def test_negative_tau_names_key():
    with pytest.raises(ConfigError) as exc:
        validate_config("tau = -0.1\n")
    assert any(e.startswith("tau") for e in exc.value.errors)


def test_alpha_grid_three_cells():
    cfg = validate_config("alpha_sq = 1,10,100\nbeta_sq = 1\n")
    assert cfg.alpha_sq == (1.0, 10.0, 100.0)
    assert len(cfg.grid) == 3


def test_all_errors_reported_at_once():
    with pytest.raises(ConfigError) as exc:
        validate_config("tau = -1\ntrials_per_cell = 0\nbogus = 3\np0_diag = 1,2\nlambda = x\n")
    keys = {e.split(":")[0] for e in exc.value.errors}
    assert {"tau", "trials_per_cell", "bogus", "P0_diag", "lambda"} <= keys


def test_section_headers_rejected():
    with pytest.raises(ConfigError):
        validate_config("[other]\ntau = 0.1\n")


def test_segments_and_flags_parse():
    cfg = validate_config("segments = 1:1:0, 2:0.5:-0.25\nlog_trials = yes\ndump_trajectory = 1\nfigure_cell = 1,1\nalpha_sq = 1\nbeta_sq = 1\n")
    assert cfg.segments == ((1.0, 1.0, 0.0), (2.0, 0.5, -0.25))
    assert cfg.log_trials and cfg.dump_trajectory == 1 and cfg.figure_cell == (1.0, 1.0)


def test_render_roundtrip():
    cfg = validate_config("tau = 0.1\nalpha_sq = 2, 3\nlog_trials = true\ndump_trajectory = 4\n")
    assert validate_config(render_config(cfg)) == cfg


def test_minimal_run_writes_reports(tmp_path):
    out = tmp_path / "out"
    run_experiment(validate_config(MINIMAL), out_dir=out)
    expected = {
        "summary.csv": SUMMARY_HEADER,
        "kl.csv": KL_HEADER,
        "prediction_inv.csv": PREDICTION_HEADER,
        "prediction_conv.csv": PREDICTION_HEADER,
    }
    assert {p.name for p in out.iterdir()} == set(expected)
    for name, header in expected.items():
        assert _rows(out / name)[0] == header
    assert len(_rows(out / "prediction_inv.csv")) == mixed_reference().n + 2


def test_rerun_is_byte_identical(tmp_path):
    cfg = validate_config(SMALL)
    run_experiment(cfg, out_dir=tmp_path / "a")
    run_experiment(cfg, out_dir=tmp_path / "b")
    assert _snapshot(tmp_path / "a") == _snapshot(tmp_path / "b")


def test_summary_matches_trial_logs(tmp_path):
    run_experiment(validate_config(SMALL), out_dir=tmp_path)
    for row in _rows(tmp_path / "summary.csv")[1:]:
        rec = dict(zip(SUMMARY_HEADER, row))
        trials = _rows(tmp_path / f"trials_a{float(rec['alpha_sq']):g}_b{float(rec['beta_sq']):g}.csv")
        assert trials[0] == TRIALS_HEADER
        for flavor, key in (("conventional", "mean_cost_conv"), ("invariant", "mean_cost_inv")):
            costs = [float(r[2]) for r in trials[1:] if r[1] == flavor]
            lost = sum(int(r[3]) for r in trials[1:] if r[1] == flavor)
            assert len(costs) == int(rec["trials"])
            assert float(rec[key]) == pytest.approx(np.mean(costs), rel=1e-12)
            assert lost == int(rec["lost_" + key.split("_")[-1]])


def test_floats_round_trip_exactly(tmp_path):
    report = run_experiment(validate_config(MINIMAL), out_dir=tmp_path)
    row = _rows(tmp_path / "summary.csv")[1]
    assert float(row[3]) == report.cells[0].summary.mean_cost_inv


def test_failed_run_leaves_no_partial_files(tmp_path, monkeypatch):
    real = experiment._write_csv
    calls = []

    def flaky(path, header, rows):
        calls.append(path)
        if len(calls) == 3:
            raise OSError("disk full")
        real(path, header, rows)

    monkeypatch.setattr(experiment, "_write_csv", flaky)
    with pytest.raises(OSError):
        run_experiment(validate_config(MINIMAL), out_dir=tmp_path)
    assert list(tmp_path.iterdir()) == []


def test_reference_csv_config(tmp_path):
    ref = mixed_reference(0.05, [(1.0, 1.0, 0.2)])
    save_reference_csv(ref, tmp_path / "ref.csv")
    cfg = validate_config(f"reference_csv = {tmp_path / 'ref.csv'}\n" + MINIMAL)
    report = run_experiment(cfg, out_dir=tmp_path / "out")
    np.testing.assert_array_equal(report.reference.poses, ref.poses)


def test_cli_validate(tmp_path, capsys):
    good = tmp_path / "good.cfg"
    good.write_text(MINIMAL)
    assert main(["validate", "--config", str(good)]) == 0
    bad = tmp_path / "bad.cfg"
    bad.write_text("tau = -1\nwat = 2\n")
    assert main(["validate", "--config", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "tau" in err and "wat" in err


def test_cli_missing_config_is_io_error(tmp_path):
    assert main(["validate", "--config", str(tmp_path / "nope.cfg")]) == 3


def test_cli_run_and_plot(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(MINIMAL + "time_averaged_kl = true\n")
    out = tmp_path / "out"
    code = main(["run", "--config", str(cfg), "--out", str(out), "--threads", "1", "--seed", "3", "--log-trials", "--dump-trajectory", "1"])
    assert code == 0
    names = {p.name for p in out.iterdir()}
    assert {"trials_a1_b1.csv", "trajectory_inv_1.csv", "trajectory_conv_1.csv", "kl_time_averaged.csv"} <= names
    assert "alpha^2" in capsys.readouterr().out
    assert main(["plot", "--in", str(out)]) == 0
    assert any(p.suffix == ".gp" for p in out.iterdir())


def test_cli_rejects_bad_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(MINIMAL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o"), "--dump-trajectory", "7"]) == 2


def test_load_config_from_file(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("lambda = 0.5\nm_diag = 0.1, 0.2\n")
    cfg = load_config(p)
    assert cfg.lam == 0.5 and cfg.M_diag == (0.1, 0.2)
