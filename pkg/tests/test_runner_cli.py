import hashlib
import json

import numpy as np
import pandas as pd
import pytest

from ratchet.cli import EXIT_ACCEPTANCE, EXIT_CONFIG, EXIT_OK, build_parser, config_from_args, main
from ratchet.exceptions import ConfigError
from ratchet.schemas.experiment import ExperimentConfig, ExperimentKind
from ratchet.services.analytic_profile import profile_recursion
from ratchet.services.graphical_core import load_events
from ratchet.services.reports import route_frame
from ratchet.services.runner import map_replicas, run_experiment


def _manifest(out):
    return json.loads((out / "manifest.json").read_text())


class TestProfileRun:
    def test_profile_table(self, tmp_path, capsys):
        out = tmp_path / "profile"
        assert main(["profile", "--rho", "0.5", "--kmax", "10", "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out / "profile.csv")
        assert len(frame) == 11
        assert frame["p_k"].iloc[0] == 0.5
        assert list(frame.columns) == ["k", "p_k", "partial_sum", "tail"]
        printed = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert printed["files"] == ["profile.csv"]

    def test_manifest(self, tmp_path):
        out = tmp_path / "profile"
        main(["profile", "--rho", "0.8", "--kmax", "5", "--out", str(out)])
        manifest = _manifest(out)
        assert manifest["exit_code"] == 0
        assert manifest["experiment"] == "profile"
        assert manifest["summary"]["shape"] == "Unimodal(1,1)"
        entry = manifest["files"][0]
        body = (out / entry["name"]).read_bytes()
        assert hashlib.sha256(body).hexdigest() == entry["sha256"]
        assert entry["rows"] == 6

    def test_json_format(self, tmp_path):
        out = tmp_path / "profile"
        assert main(["profile", "--rho", "0.5", "--kmax", "4", "--format", "json", "--out", str(out)]) == EXIT_OK
        records = json.loads((out / "profile.json").read_text())
        assert len(records) == 5
        assert records[0]["p_k"] == 0.5

    def test_config_file_with_override(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"rho": 0.3, "kmax": 5}))
        out = tmp_path / "profile"
        assert main(["profile", "--config", str(config), "--kmax", "4", "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out / "profile.csv")
        assert len(frame) == 5
        assert frame["p_k"].iloc[0] == pytest.approx(0.7)


class TestConfigErrors:
    def test_unknown_key(self, tmp_path):
        config = tmp_path / "config.json"
        config.write_text(json.dumps({"rho": 0.3, "colour": "red"}))
        assert main(["profile", "--config", str(config), "--out", str(tmp_path / "x")]) == EXIT_CONFIG

    def test_unreadable_config(self, tmp_path):
        assert main(["profile", "--config", str(tmp_path / "missing.json")]) == EXIT_CONFIG

    def test_supercritical_rates(self, tmp_path):
        assert main(["profile", "--alpha", "1", "--mu", "1.5", "--out", str(tmp_path / "x")]) == EXIT_CONFIG

    def test_single_route_compare(self, tmp_path):
        path = tmp_path / "route_recursion.csv"
        route_frame("recursion", profile_recursion(0.5, 3).weights).to_csv(path, index=False)
        assert main(["compare", "--inputs", str(path), "--out", str(tmp_path / "x")]) == EXIT_CONFIG

    def test_forward_needs_room_after_burn_in(self, tmp_path):
        args = ["forward", "--n", "20", "--f-value", "2", "--t-max", "10", "--burn-in", "20", "--out", str(tmp_path / "x")]
        assert main(args) == EXIT_CONFIG

    def test_rho_and_mu_exclusive(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["profile", "--rho", "0.5", "--mu", "0.5"])

    def test_config_from_args(self):
        args = build_parser().parse_args(["yule", "--rho", "0.25", "--reps", "10", "--f-family", "log", "--f-c", "2"])
        config = config_from_args(args)
        assert config.experiment == ExperimentKind.yule
        assert config.mu == pytest.approx(0.25)
        assert config.f_family.c == 2.0

    def test_bad_family(self):
        args = build_parser().parse_args(["forward", "--f-family", "power"])
        with pytest.raises(ConfigError):
            config_from_args(args)


class TestCompareRuns:
    def _routes(self, tmp_path, shift):
        p = profile_recursion(0.5, 4).weights
        recursion = tmp_path / "route_recursion.csv"
        yule = tmp_path / "route_yule_mc.csv"
        route_frame("recursion", p).to_csv(recursion, index=False)
        shifted = p.copy()
        shifted[0] += shift
        route_frame("yule_mc", shifted, np.full(len(p), 0.004)).to_csv(yule, index=False)
        return [str(recursion), str(yule)]

    def test_passing_inputs(self, tmp_path):
        out = tmp_path / "compare"
        assert main(["compare", "--inputs", *self._routes(tmp_path, 0.001), "--out", str(out)]) == EXIT_OK
        table = pd.read_csv(out / "compare.csv")
        assert list(table.columns) == ["k", "recursion", "yule_mc", "yule_mc_dev", "yule_mc_p"]
        assert table["k"].iloc[-1] == "max_abs_dev"
        assert (out / "compare_long.csv").exists()

    def test_failing_inputs(self, tmp_path):
        out = tmp_path / "compare"
        assert main(["compare", "--inputs", *self._routes(tmp_path, 0.1), "--out", str(out)]) == EXIT_ACCEPTANCE
        manifest = _manifest(out)
        assert manifest["exit_code"] == 3
        assert "yule_mc" in manifest["summary"]["acceptance_failure"]
        assert (out / "compare.csv").exists()

    def test_full_compare(self, tmp_path):
        out = tmp_path / "compare"
        args = [
            "compare", "--rho", "0.5", "--reps", "300", "--kmax", "3", "--n", "50", "--f-value", "5",
            "--t-max", "200", "--burn-in", "50", "--threshold", "50", "--out", str(out),
        ]
        assert main(args) in (EXIT_OK, EXIT_ACCEPTANCE)
        table = pd.read_csv(out / "compare.csv")
        for column in ("recursion", "ode/2alpha", "yule_mc", "brw_mc", "forward_mc", "yule_mc_dev"):
            assert column in table.columns
        assert len(table) == 5
        for route in ("recursion", "ode", "yule_mc", "brw_mc", "forward_mc"):
            assert (out / f"route_{route}.csv").exists()
        ode = _manifest(out)["summary"]["max_abs_deviation"]["ode"]
        assert ode <= 1e-4


class TestExperiments:
    def test_yule_is_deterministic(self, tmp_path):
        digests = []
        for name in ("first", "second"):
            out = tmp_path / name
            assert main(["yule", "--rho", "0.5", "--reps", "200", "--seed", "7", "--out", str(out)]) == EXIT_OK
            digests.append({f["name"]: f["sha256"] for f in _manifest(out)["files"]})
        assert digests[0] == digests[1]
        frame = pd.read_csv(tmp_path / "first" / "yule_samples.csv")
        assert list(frame.columns) == ["replica", "method", "value", "censored_flag"]
        assert len(frame) == 200

    def test_brw(self, tmp_path):
        out = tmp_path / "brw"
        assert main(["brw", "--rho", "0.5", "--reps", "30", "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out / "yule_samples.csv")
        assert set(frame["method"]) == {"brw_mc"}

    def test_gw(self, tmp_path):
        out = tmp_path / "gw"
        assert main(["gw", "--rho", "0.5", "--reps", "2000", "--out", str(out)]) == EXIT_OK
        row = pd.read_csv(out / "gw.csv").iloc[0]
        assert row["extinction_freq"] == pytest.approx(0.5, abs=0.05)
        assert row["g_map"] == pytest.approx(0.190983, abs=1e-6)

    def test_fixedpoint(self, tmp_path):
        out = tmp_path / "fixedpoint"
        assert main(["fixedpoint", "--rho", "0.5", "--reps", "200", "--threshold", "50", "--out", str(out)]) == EXIT_OK
        frame = pd.read_csv(out / "fixedpoint.csv")
        assert set(frame["side"]) == {"lhs", "rhs"}
        assert len(frame) == 400

    def test_ode(self, tmp_path):
        out = tmp_path / "ode"
        assert main(["ode", "--rho", "0.5", "--kmax", "5", "--t-max", "50", "--out", str(out)]) == EXIT_OK
        assert list(pd.read_csv(out / "ode.csv").columns) == ["t", "k", "n_k"]
        assert len(pd.read_csv(out / "route_ode.csv")) == 6
        assert _manifest(out)["summary"]["max_logistic_deviation"] < 1e-4

    def test_forward(self, tmp_path):
        out = tmp_path / "forward"
        args = [
            "forward", "--n", "20", "--f-value", "2", "--reps", "2", "--t-max", "100",
            "--burn-in", "20", "--snapshot-step", "1", "--out", str(out),
        ]
        assert main(args) == EXIT_OK
        clicks = pd.read_csv(out / "clicks.csv")
        profile = pd.read_csv(out / "profile.csv")
        assert list(clicks.columns) == ["replica", "time", "new_best_type"]
        assert set(profile["replica"]) == {0, 1}
        summary = _manifest(out)["summary"]
        assert sum(summary["empirical_profile"]) == pytest.approx(1.0, abs=1e-6)

    def test_graphical(self, tmp_path):
        out = tmp_path / "graphical"
        args = ["graphical", "--n", "8", "--f-value", "1", "--reps", "20", "--window", "3", "--out", str(out)]
        assert main(args) == EXIT_OK
        summary = _manifest(out)["summary"]
        assert summary["best_type_mismatches"] == 0
        assert summary["audit_violations"] == 0
        assert load_events(out / "events.jsonl").N == 8

    def test_dual(self, tmp_path):
        out = tmp_path / "dual"
        args = ["dual", "--n", "10", "--f-value", "1", "--reps", "20", "--scales", "5", "8", "--t-max", "20", "--out", str(out)]
        assert main(args) == EXIT_OK
        sweep = pd.read_csv(out / "h0_sweep.csv")
        assert list(sweep["N_over_f"]) == [5.0, 8.0]
        assert (sweep["exact_mean"] > 0).all()
        extinctions = pd.read_csv(out / "extinctions.csv")
        assert list(extinctions.columns) == ["replica", "level", "time"]

    def test_run_experiment_directly(self, tmp_path):
        config = ExperimentConfig(experiment="profile", rho=0.5, kmax=3, out_dir=str(tmp_path / "direct"))
        manifest = run_experiment(config)
        assert manifest.files[0].name == "profile.csv"
        assert manifest.config["kmax"] == 3


def test_map_replicas_keeps_order():
    assert map_replicas(abs, [-3, 2, -1], workers=1) == [3, 2, 1]
