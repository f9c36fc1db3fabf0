"""Command line subcommands and exit codes."""

import csv
import io
import json
import math
import subprocess
import sys

import pytest

from longlines.cli import EXIT_CALIBRATION, EXIT_OK, EXIT_USAGE, EXIT_VERDICT, main


def _run(argv):
    out = io.StringIO()
    code = main(argv, out)
    return code, out.getvalue()


def test_no_subcommand_is_a_usage_error():
    assert _run([])[0] == EXIT_USAGE


def test_bad_option_is_a_usage_error():
    assert _run(["sample", "--measure", "torus", "--n", "3"])[0] == EXIT_USAGE


def test_sample_writes_csv():
    code, text = _run(["sample", "--measure", "lp-ball", "--n", "3", "--p", "3", "--count", "5", "--seed", "2"])
    assert code == EXIT_OK
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["x0", "x1", "x2"] and len(rows) == 6
    again = _run(["sample", "--measure", "lp-ball", "--n", "3", "--p", "3", "--count", "5", "--seed", "2"])[1]
    assert again == text


def test_shell_volume_of_the_ball_shell():
    code, text = _run(["shell-volume", "--kind", "ball-shell", "--n", "10", "--samples", "40000"])
    assert code == EXIT_OK
    est, se = (float(v) for v in text.split("+/-"))
    expected = 1 - (1 - 1 / 10) ** 10
    assert abs(est - expected) <= 4 * max(se, 1e-4)


def test_measure_line_with_explicit_segment():
    code, text = _run(["measure-line", "--kind", "ball-shell", "--n", "2", "--origin", "0,0",
                       "--direction", "1,0", "--t-max", "2"])
    assert code == EXIT_OK
    rec = json.loads(text)
    # the ray leaves the hole at (1 - 1/2) kappa and the ball at kappa = 1 / sqrt(pi)
    assert rec["length"] == pytest.approx(0.5 / math.sqrt(math.pi), rel=1e-12)
    assert rec["method"] == "exact"


def test_measure_line_needs_both_or_neither():
    assert _run(["measure-line", "--kind", "ball-shell", "--n", "2", "--origin", "0,0"])[0] == EXIT_USAGE
    assert _run(["measure-line", "--kind", "ball-shell", "--n", "3", "--origin", "0,0",
                 "--direction", "1,0"])[0] == EXIT_USAGE


def test_find_line_reports_a_certificate():
    code, text = _run(["find-line", "--n", "32", "--p", "inf", "--trials", "20", "--u-grid", "32"])
    assert code == EXIT_OK
    rec = json.loads(text)
    assert 0 <= rec["fraction"] <= 1
    assert rec["certified_length"] == pytest.approx(rec["fraction"] * rec["segment_length"])


def test_tv_estimate_for_the_gaussian_direction():
    code, text = _run(["tv-estimate", "--n", "256", "--regime", "gaussian", "--json"])
    assert code == EXIT_OK
    first, second = text.splitlines()
    assert float(first.split("+/-")[0]) < 0.1
    assert json.loads(second)["method"] == "radial-quadrature"


def test_tv_estimate_rejects_broken_constraints():
    assert _run(["tv-estimate", "--n", "64", "--p", "3", "--r", "0.9"])[0] == EXIT_USAGE


def test_verify_single_claim():
    code, text = _run(["verify", "--claim", "exp_moments", "--p", "2", "--samples", "20000"])
    assert code == EXIT_OK
    rows = list(csv.DictReader(io.StringIO(text)))
    assert rows[0]["claim_id"] == "exp_moments" and rows[0]["verdict"] == "pass"


def test_verify_unknown_claim():
    assert _run(["verify", "--claim", "no_such_claim"])[0] == EXIT_USAGE


def test_verify_fail_exit_code(monkeypatch):
    from longlines import diagnostics

    def always_fail(params, stream, samples):
        return [diagnostics._report("rigged", 1, 2.0, 5.0, 0.1, 1.0, "le", samples, stream)]

    monkeypatch.setitem(diagnostics.CATALOG, "rigged", always_fail)
    assert _run(["verify", "--claim", "rigged", "--samples", "1"])[0] == EXIT_VERDICT


def test_scaling_reports_calibration_failures(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[experiment]\nregime = cube\nn = 16 32 64 128\ntrials = 2\nsup_trials = 2\n"
                   "tangent_seeds = 0\nu_grid = 16\n[set]\nkind = lp-shell\ncalib_samples = 1000\n")
    code, _ = _run(["scaling", "--config", str(cfg), "--out", str(tmp_path / "out")])
    assert code == EXIT_CALIBRATION


def test_scaling_missing_config_is_a_usage_error(tmp_path):
    assert _run(["scaling", "--config", str(tmp_path / "none.cfg")])[0] == EXIT_USAGE


def test_console_entry_point_runs_as_module():
    proc = subprocess.run([sys.executable, "-m", "longlines.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "longlines" in proc.stdout
