from __future__ import annotations

import csv
import io
import json
import math
import subprocess
import sys

import pytest
from scipy.special import erfcx

from fracrenew import __version__
from fracrenew.cli import main


@pytest.fixture
def run(capsys):
    def _run(*argv):
        code = main(list(argv))
        out, err = capsys.readouterr()
        return code, out, err
    return _run


def rows_of(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestMlEval:
    def test_exponential(self, run):
        code, out, _ = run("ml-eval", "--beta", "1", "--z", "-1")
        assert code == 0
        assert float(rows_of(out)[0]["value"]) == pytest.approx(0.3678794412, abs=1e-10)

    def test_survival(self, run):
        code, out, _ = run("ml-eval", "--beta", "0.5", "--psi", "--t", "1")
        row = rows_of(out)[0]
        assert code == 0 and float(row["value"]) == pytest.approx(float(erfcx(1.0)), abs=1e-12)
        assert list(row)[:4] == ["input", "value", "method_used", "est_abs_error"]

    def test_bad_order(self, run):
        code, out, err = run("ml-eval", "--beta", "0", "--z", "-1")
        assert code == 2 and "--beta" in err and out == ""

    def test_modes(self, run):
        _, out, _ = run("ml-eval", "--beta", "0.5", "--phi", "--t", "1", "4")
        assert float(rows_of(out)[0]["value"]) == pytest.approx(0.136606007391949, rel=1e-12)
        _, out, _ = run("ml-eval", "--beta", "1", "--deriv", "2", "--z", "-1")
        assert float(rows_of(out)[0]["value"]) == pytest.approx(math.exp(-1), rel=1e-14)

    def test_usage_errors(self, run):
        assert run("ml-eval", "--beta", "0.5", "--z", "1")[0] == 2
        assert run("ml-eval", "--beta", "0.5", "--psi", "--z", "-1")[0] == 2
        assert run("ml-eval", "--beta", "0.5")[0] == 2


class TestPmf:
    def test_poisson(self, run):
        code, out, _ = run("pmf", "--beta", "1", "--t", "1", "--k-max", "5")
        rows = rows_of(out)
        assert code == 0 and len(rows) == 6
        for r in rows:
            k = int(r["k"])
            assert float(r["prob"]) == pytest.approx(math.exp(-1) / math.factorial(k), abs=1e-12)
            assert float(r["tail_bound"]) >= 0

    def test_zero_time(self, run):
        _, out, _ = run("pmf", "--beta", "0.5", "--t", "0")
        rows = rows_of(out)
        assert len(rows) == 1 and rows[0]["k"] == "0" and float(rows[0]["prob"]) == 1.0

    def test_bad_model_flag(self, run):
        code, _, err = run("pmf", "--model", "exponential", "--rate", "-1", "--t", "1")
        assert code == 2 and "--rate" in err


class TestSimulate:
    def test_deterministic(self, run):
        a = run("simulate", "--beta", "0.7", "--n-paths", "2000", "--seed", "3")[1]
        b = run("simulate", "--beta", "0.7", "--n-paths", "2000", "--seed", "3", "--threads", "2")[1]
        assert a == b

    def test_within_band(self, run):
        _, out, _ = run("simulate", "--model", "exponential", "--n-paths", "100000", "--t", "1")
        rows = rows_of(out)
        diffs = [abs(float(r["empirical"]) - float(r["analytic"])) for r in rows]
        assert all(d <= float(r["band_4sigma"]) for d, r in zip(diffs, rows))
        assert float(rows[0]["ks_statistic"]) < float(rows[0]["ks_critical"])

    def test_no_paths(self, run):
        code, _, err = run("simulate", "--n-paths", "0")
        assert code == 2 and "--n-paths" in err

    def test_seed_from_environment(self, run, monkeypatch):
        monkeypatch.setenv("FRACRENEW_SEED", "17")
        _, out, _ = run("simulate", "--n-paths", "100", "--format", "json")
        assert json.loads(out)["meta"]["master_seed"] == 17
        _, out, _ = run("simulate", "--n-paths", "100", "--format", "json", "--seed", "2")
        assert json.loads(out)["meta"]["master_seed"] == 2


class TestThin:
    def test_exponential_fixed_point(self, run):
        _, out, _ = run("thin", "--base", "exponential", "--n-paths", "20000")
        for r in rows_of(out):
            assert float(r["ks_distance"]) < float(r["ks_critical"])
            assert float(r["epsilon"]) == pytest.approx(float(r["delta"]))

    def test_lomax_decreasing(self, run):
        _, out, _ = run("thin", "--n-paths", "20000", "--levels", "0.1,0.01,0.001")
        ks = [float(r["ks_distance"]) for r in rows_of(out)]
        assert ks[0] > ks[1] > ks[2]

    def test_empty_schedule(self, run):
        code, _, err = run("thin", "--levels", "")
        assert code == 2 and "--levels" in err

    def test_bad_schedule(self, run):
        assert run("thin", "--levels", "0.01,0.1")[0] == 2


class TestCtrw:
    def test_lattice_value(self, run):
        code, out, _ = run("ctrw", "--beta", "1", "--jump", "twopoint", "--t", "1", "--x", "0")
        row = rows_of(out)[0]
        assert code == 0 and float(row["value"]) == pytest.approx(0.4657596, abs=1e-6)
        assert 0.999 <= float(row["mass"]) <= 1.0 + 1e-12

    def test_montroll_weiss_normalisation(self, run):
        code, out, _ = run("ctrw", "--check-mw", "--kappa", "0")
        assert code == 0 and float(rows_of(out)[0]["value"]) < 1e-6

    def test_gaussian_mass(self, run):
        _, out, _ = run("ctrw", "--beta", "0.5", "--jump", "gaussian", "--nx", "5")
        for r in rows_of(out):
            assert 0.999 <= float(r["mass"]) <= 1.0 + 1e-12

    def test_simulation_columns(self, run):
        _, out, _ = run("ctrw", "--beta", "0.5", "--x", "-1", "0", "1", "--simulate", "5000")
        for r in rows_of(out):
            assert float(r["abs_diff"]) < 0.05

    def test_residual_checks(self, run):
        code, out, _ = run("ctrw", "--model", "exponential", "--check-kf")
        assert code == 0 and rows_of(out)[0]["passed"] == "true"
        code, out, _ = run("ctrw", "--beta", "0.5", "--check-fractional")
        assert code == 0

    def test_kf_needs_exponential(self, run):
        code, _, err = run("ctrw", "--beta", "0.5", "--check-kf")
        assert code == 2 and "--check-kf" in err


class TestVerify:
    def test_relaxation(self, run):
        code, out, err = run("verify", "relaxation", "--beta", "0.5")
        rows = rows_of(out)
        assert code == 0 and err.startswith("PASS")
        assert {"residual", "ratio"} <= set(rows[0])

    def test_monotone(self, run):
        code, out, err = run("verify", "monotone", "--beta", "0.75")
        assert code == 0 and "PASS" in err
        assert all(r["violations"] == "0" for r in rows_of(out))

    def test_unknown(self, run):
        code, _, err = run("verify", "bogus")
        assert code == 2 and "bogus" in err

    def test_relaxation_window(self, run):
        _, wide, _ = run("verify", "relaxation", "--beta", "0.5")
        code, narrow, _ = run("verify", "relaxation", "--beta", "0.5", "--t-min", "1.0")
        assert code == 0
        # the residual is largest near the origin, so a later window sees less of it
        assert float(rows_of(narrow)[1]["residual"]) < float(rows_of(wide)[1]["residual"])

    def test_window_only_for_relaxation(self, run):
        code, _, err = run("verify", "monotone", "--t-min", "1")
        assert code == 2 and "--t-min" in err


def test_thin_logs_each_level(run):
    code, _, err = run("thin", "--levels", "0.1,0.01", "--n-paths", "500")
    assert code == 0
    assert [ln.split(":")[0] for ln in err.splitlines()] == ["level 1/2", "level 2/2"]


def test_fractional_window_flag(run):
    code, out, _ = run("ctrw", "--beta", "0.5", "--check-fractional", "--t-min", "1.0")
    assert code == 0 and rows_of(out)[0]["passed"] == "true"
    code, _, err = run("ctrw", "--beta", "0.5", "--check-fractional", "--t-min", "3")
    assert code == 2 and "--t-min" in err


class TestOutput:
    def test_json_shape(self, run):
        _, out, _ = run("ml-eval", "--beta", "1", "--deriv", "1", "--z", "-2", "--format", "json")
        doc = json.loads(out)
        assert set(doc) == {"meta", "rows"}
        assert doc["meta"]["library_version"] == __version__
        assert doc["meta"]["run_config"]["subcommand"] == "ml-eval"
        assert doc["rows"][0]["est_abs_error"] is None

    def test_csv_meta_on_first_row(self, run):
        _, out, _ = run("pmf", "--beta", "0.5", "--t", "1", "--k-max", "3")
        rows = rows_of(out)
        meta = json.loads(rows[0]["meta"])
        assert meta["run_config"]["params"]["beta"] == 0.5
        assert all(r["meta"] == "" for r in rows[1:])
        assert out.endswith("\r\n")

    def test_replay_from_output_and_config(self, run, tmp_path):
        first = tmp_path / "a.json"
        assert run("simulate", "--beta", "0.6", "--n-paths", "3000", "--seed", "9", "--format", "json",
                   "--output", str(first))[0] == 0
        again = tmp_path / "b.json"
        assert run("--config", str(first), "--threads", "3", "--output", str(again))[0] == 0
        assert first.read_bytes() == again.read_bytes()
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps(json.loads(first.read_text())["meta"]["run_config"]))
        third = tmp_path / "c.json"
        assert run("simulate", "--beta", "0.9", "--config", str(cfg), "--output", str(third))[0] == 0
        assert third.read_bytes() == first.read_bytes()

    def test_config_mismatch(self, run, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"subcommand": "pmf", "params": {"t": 1.0}}))
        assert run("thin", "--config", str(cfg))[0] == 2
        code, out, _ = run("--config", str(cfg))
        assert code == 0 and len(rows_of(out)) == 21

    def test_config_unknown_parameter(self, run, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"subcommand": "pmf", "params": {"t": 1.0, "bogus": 1}}))
        code, _, err = run("--config", str(cfg))
        assert code == 2 and "bogus" in err

    def test_missing_subcommand(self, run):
        assert run()[0] == 2


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "fracrenew.cli", "ml-eval", "--beta", "1", "--z", "-1"],
                         capture_output=True, text=True, check=True).stdout
    assert "0.367879441171442" in out
