import hashlib
import os
import pathlib
import subprocess

import numpy as np
import pytest

import olfc

ROOT = pathlib.Path(os.environ.get("OLFC_SOURCE_DIR", pathlib.Path(__file__).parents[2]))
CASE = str(ROOT / "scenarios" / "case_study.yaml")
CLI = os.environ.get("OLFC_CLI")


def test_load_bundled_scenario():
    s = olfc.load_scenario(CASE)
    assert s.name == "case-study"
    assert s.areas == 4
    assert s.lines == 4
    assert s.variant == "ssosm-consensus"
    assert s.warnings == []
    assert len(s.config_hash()) == 64
    again = olfc.parse_scenario(s.serialize())
    assert again.config_hash() == s.config_hash()


def test_optimal_dispatch_matches_closed_form():
    Q = np.array([2.42, 3.78, 3.31, 2.75]) * 1e4
    P_d = np.array([0.010, 0.015, 0.012, 0.014])
    P, lam = olfc.optimal_dispatch(P_d, Q)
    expected = (1 / Q) / np.sum(1 / Q) * P_d.sum()
    np.testing.assert_allclose(P, expected, rtol=0, atol=1e-15)
    assert lam == pytest.approx(P_d.sum() / np.sum(1 / Q), rel=1e-14)


def test_incidence():
    B = olfc.build_incidence(2, [(0, 1, -1.0)])
    np.testing.assert_array_equal(B, [[1.0], [-1.0]])


def test_config_error_carries_rule():
    with pytest.raises(olfc.ConfigError) as info:
        olfc.load_scenario(CASE, [("controller.M3", "0")])
    assert info.value.rule == "M3 strictly positive"
    assert isinstance(info.value, ValueError)


def test_short_run_and_verify():
    s = olfc.load_scenario(CASE, [("simulation.t_end", "3")])
    tr = olfc.run_scenario(s)
    assert tr.f.shape == (3001, 4)
    assert tr.time[-1] == pytest.approx(3.0)
    assert np.all(tr.f[1100] < 0)
    assert tr.max_control_increment_ratio <= 1 + 1e-12
    report = olfc.verify(s, tr)
    statuses = {c["id"]: c["status"] for c in report["criteria"]}
    assert statuses["1"] == "INCONCLUSIVE"
    assert statuses["5"] == "PASS"


def test_batch_preserves_order():
    runs = [olfc.load_scenario(CASE, [("simulation.t_end", "1.5"), ("controller.W_max", str(w))])
            for w in (5, 20)]
    out = olfc.run_batch(runs, workers=2)
    assert len(out) == 2
    for s, tr in zip(runs, out):
        np.testing.assert_array_equal(tr.u, olfc.run_scenario(s).u)


def _cli(*args, env=None):
    return subprocess.run([CLI, *args], capture_output=True, text=True, env=env)


needs_cli = pytest.mark.skipif(not CLI, reason="CLI binary not built")


@needs_cli
def test_cli_dispatch():
    r = _cli("dispatch", CASE)
    assert r.returncode == 0
    assert "lambda_opt = 379.598565" in r.stdout


@needs_cli
def test_cli_verify_case_study(tmp_path):
    r = _cli("verify", CASE, "-o", str(tmp_path))
    assert r.returncode == 0, r.stdout + r.stderr
    for name in ("trajectory.csv", "plot_data.csv", "report.txt", "report.json", "manifest.json"):
        assert (tmp_path / name).exists()


@needs_cli
def test_cli_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text(pathlib.Path(CASE).read_text().replace("M3: 0.1", "M3: 0"))
    r = _cli("simulate", str(bad), "-o", str(tmp_path / "out"))
    assert r.returncode == 2
    assert "M3 strictly positive" in r.stderr


@needs_cli
def test_cli_simulate_is_deterministic(tmp_path):
    short = tmp_path / "short.yaml"
    short.write_text(pathlib.Path(CASE).read_text().replace("t_end: 60", "t_end: 2"))
    digests = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        r = _cli("simulate", str(short), "-o", str(out))
        assert r.returncode == 0, r.stderr
        digests.append(hashlib.sha256((out / "trajectory.csv").read_bytes()).hexdigest())
    assert digests[0] == digests[1]


@needs_cli
def test_cli_output_dir_from_environment(tmp_path):
    short = tmp_path / "short.yaml"
    short.write_text(pathlib.Path(CASE).read_text().replace("t_end: 60", "t_end: 1"))
    env = dict(os.environ, OLFC_OUTPUT_DIR=str(tmp_path / "envout"))
    r = _cli("simulate", str(short), env=env)
    assert r.returncode == 0, r.stderr
    assert (tmp_path / "envout" / "manifest.json").exists()


@needs_cli
def test_cli_sweep(tmp_path):
    short = tmp_path / "short.yaml"
    short.write_text(pathlib.Path(CASE).read_text().replace("t_end: 60", "t_end: 20"))
    grid = tmp_path / "grid.yaml"
    grid.write_text("parameters:\n  controller.W_max: [5, 10]\n")
    out = tmp_path / "sweep"
    r = _cli("sweep", str(short), "--grid", str(grid), "-j", "2", "-o", str(out))
    # W_max = 5 leaves the reaching basin, so the sweep reports a failed criterion
    assert r.returncode == 1, r.stdout + r.stderr
    lines = (out / "summary.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[1].split(",")[3] == "fail"
    assert lines[2].split(",")[3] == "pass"
    assert (out / "run_0002" / "scenario.yaml").exists()
