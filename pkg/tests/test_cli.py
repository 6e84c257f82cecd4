import json
import os

import numpy as np
import pytest

from wavefront.cli import run

FISHER = {"model": {"builtin": "fisher_kpp_delay", "params": {"b": 1.0, "tau": 1.0, "K": 1.0}},
          "pipeline": {"speeds": [6], "validate": {"c": 6, "t_end": 1.0, "dx": 0.1}}}
CHEMOSTAT = {"model": {"builtin": "chemostat", "params": {"tau": 0.2, "m": 4.0}}, "pipeline": {"speeds": [15]}}


def write_config(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def read(path):
    with open(path) as fh:
        return json.load(fh)


class TestExitCodes:
    def test_spectrum(self, tmp_path, capsys):
        cfg = write_config(tmp_path, FISHER)
        assert run(["spectrum", "--config", cfg, "--out", str(tmp_path / "o"), "--speeds", "4,6"]) == 0
        rep = read(tmp_path / "o" / "spectrum.json")
        assert rep["lambda0"] == pytest.approx(1.0, abs=1e-12)
        assert rep["simple"] and rep["dominant"] and rep["positive"]
        assert len(rep["lambda_of_eps"]) == 2
        assert "lambda0" in capsys.readouterr().out

    def test_low_speed_is_convergence_failure(self, tmp_path):
        cfg = write_config(tmp_path, FISHER)
        assert run(["profile", "--config", cfg, "--out", str(tmp_path / "o"), "--speeds", "0.5"]) == 3

    def test_partial_failure_reported(self, tmp_path, capsys):
        cfg = write_config(tmp_path, FISHER)
        out = tmp_path / "o"
        assert run(["profile", "--config", cfg, "--out", str(out), "--speeds", "0.5,6"]) == 0
        summary = read(out / "profile_summary.json")
        assert [f["c"] for f in summary["failures"]] == [0.5]
        assert (out / "profile_c6.csv").exists() and not (out / "profile_c0.5.csv").exists()
        assert "no" in capsys.readouterr().out

    @pytest.mark.parametrize("argv", [
        ["profile"],
        ["bogus", "--config", "x.json"],
        ["profile", "--config", "{cfg}", "--speeds", "a,b"],
        ["profile", "--config", "{cfg}", "--speeds", "-1"],
    ])
    def test_bad_arguments(self, tmp_path, argv):
        cfg = write_config(tmp_path, FISHER)
        assert run([a.format(cfg=cfg) for a in argv]) == 4

    @pytest.mark.parametrize("cfg", [
        {"model": {"builtin": "fisher_kpp_delay"}, "unknown": 1},
        {"model": {"builtin": "nope"}},
        {"model": {"builtin": "fisher_kpp_delay"}, "tolerances": {"tol_fix": -1.0}},
        {"model": {"builtin": "fisher_kpp_delay"}, "tolerances": {"no_such_knob": 1.0}},
        {"pipeline": {"speeds": [6]}},
    ])
    def test_config_errors(self, tmp_path, cfg):
        path = write_config(tmp_path, cfg)
        assert run(["spectrum", "--config", path, "--out", str(tmp_path / "o")]) == 4

    def test_missing_config(self, tmp_path):
        assert run(["spectrum", "--config", str(tmp_path / "none.json")]) == 4

    def test_unreadable_config(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        assert run(["spectrum", "--config", str(path)]) == 4

    def test_no_speeds(self, tmp_path):
        cfg = write_config(tmp_path, {"model": FISHER["model"]})
        assert run(["profile", "--config", cfg, "--out", str(tmp_path / "o")]) == 4


class TestVerify:
    def test_fisher_passes(self, tmp_path):
        cfg = write_config(tmp_path, FISHER)
        assert run(["verify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
        rep = read(tmp_path / "o" / "verify.json")
        assert rep["all_pass"]
        assert set(rep["hypotheses"]) == {"H1", "H2", "H3", "H4"}

    def test_fisher_long_delay_notes_condition(self, tmp_path):
        cfg = write_config(tmp_path, {"model": {"builtin": "fisher_kpp_delay", "params": {"tau": 2.0}}})
        code = run(["verify", "--config", cfg, "--out", str(tmp_path / "o")])
        h3 = read(tmp_path / "o" / "verify.json")["hypotheses"]["H3"]
        assert not h3["condition"]["met"] and "note" in h3
        assert code == (0 if h3["verdict"] == "pass" else 2)

    def test_chemostat_washout(self, tmp_path):
        cfg = write_config(tmp_path, {"model": {"builtin": "chemostat", "params": {"m": 1.1}}})
        assert run(["verify", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
        rep = read(tmp_path / "o" / "verify.json")
        assert rep["hypotheses"]["H1"]["verdict"] == "fail"
        assert not rep["hypotheses"]["H1"]["evidence"]["survival_condition"]["met"]

    def test_seed_recorded(self, tmp_path):
        cfg = write_config(tmp_path, FISHER)
        run(["verify", "--config", cfg, "--out", str(tmp_path / "o"), "--seed", "7"])
        assert read(tmp_path / "o" / "verify.json")["seed"] == 7


@pytest.fixture(scope="module")
def fisher_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("fisher")
    cfg = write_config(base, FISHER)
    outs = []
    for k in range(2):
        out = base / f"run{k}"
        assert run(["profile", "--config", cfg, "--out", str(out)]) == 0
        assert run(["validate", "--config", cfg, "--out", str(out)]) == 0
        outs.append(out)
    return outs


class TestArtifacts:
    def test_files(self, fisher_runs):
        names = set(os.listdir(fisher_runs[0]))
        for f in ["spectrum.json", "heteroclinic.csv", "heteroclinic.json", "profile_c6.csv", "front_c6.json",
                  "profile_summary.json", "front_series_c6.csv", "validate_c6.json"]:
            assert f in names

    def test_deterministic(self, fisher_runs):
        a, b = fisher_runs
        assert sorted(os.listdir(a)) == sorted(os.listdir(b))
        for name in os.listdir(a):
            assert (a / name).read_bytes() == (b / name).read_bytes(), name

    def test_front_payload(self, fisher_runs):
        meta = read(fisher_runs[0] / "front_c6.json")
        assert meta["ok"] and meta["positive"]
        assert meta["tail"]["amp"] > 0 and meta["tail"]["v1"] == [1.0]
        assert meta["lambda_eps"] == pytest.approx(1.0294372515228594, rel=1e-10)

    def test_validate_report(self, fisher_runs):
        rep = read(fisher_runs[0] / "validate_c6.json")
        assert rep["pass"] and rep["t_end"] == 1.0 and rep["dx"] == 0.1
        series = np.loadtxt(fisher_runs[0] / "front_series_c6.csv", delimiter=",", skiprows=1)
        assert series.shape[1] == 2 and np.all(np.diff(series[:, 1]) < 0)

    def test_reuse_skips_recompute(self, fisher_runs, tmp_path):
        out = fisher_runs[0]
        before = {n: (out / n).stat().st_mtime_ns for n in ("heteroclinic.csv", "profile_c6.csv")}
        cfg = write_config(tmp_path, FISHER)
        assert run(["validate", "--config", cfg, "--out", str(out)]) == 0
        after = {n: (out / n).stat().st_mtime_ns for n in before}
        assert before == after

    def test_workers_match_serial(self, fisher_runs, tmp_path, monkeypatch):
        cfg = write_config(tmp_path, {**FISHER, "pipeline": {"speeds": [6, 10]}})
        monkeypatch.setenv("WAVEFRONT_WORKERS", "2")
        out = tmp_path / "par"
        assert run(["profile", "--config", cfg, "--out", str(out)]) == 0
        assert (out / "profile_c6.csv").read_bytes() == (fisher_runs[0] / "profile_c6.csv").read_bytes()


def test_chemostat_original_coordinates(tmp_path):
    cfg = write_config(tmp_path, CHEMOSTAT)
    out = tmp_path / "o"
    assert run(["profile", "--config", cfg, "--out", str(out)]) == 0
    orig = np.loadtxt(out / "profile_c15_original.csv", delimiter=",", skiprows=1)
    prof = np.loadtxt(out / "profile_c15.csv", delimiter=",", skiprows=1)
    S, u = orig[:, 1], orig[:, 2]
    assert np.all((S > 0) & (S < 1))
    assert np.allclose(S, 1.0 - prof[:, 1], rtol=0, atol=1e-15)
    assert np.array_equal(u, prof[:, 2])
    assert np.allclose(orig[:, 3], -prof[:, 3], rtol=0, atol=0)
    het = np.loadtxt(out / "heteroclinic_original.csv", delimiter=",", skiprows=1)
    assert het[0, 1] == pytest.approx(1.0, abs=1e-3) and het[-1, 1] == pytest.approx(0.43957531511527231, abs=1e-7)
    meta = read(out / "front_c15.json")
    assert meta["original"]["within_0_S0"]
