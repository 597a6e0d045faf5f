import json

import numpy as np
import pytest

from hamlv.cli import main
from hamlv.util import sha256_file

STAR = {"a": [1.0], "b": [1.0], "rbar": 1.0, "mu": 1.0}
SYSTEM = {"N": 1, "M": 1, "r": [1.0], "rbar": [1.0], "A": [[1.0]],
          "B": [[1.0]], "Gamma": [[0.0]], "D": [[0.0]]}


@pytest.fixture
def system_file(tmp_path):
    path = tmp_path / "system.json"
    path.write_text(json.dumps(SYSTEM))
    return path


@pytest.fixture
def state_file(tmp_path):
    path = tmp_path / "state.json"
    path.write_text(json.dumps({"x": [2.0], "v": [1.0]}))
    return path


@pytest.fixture
def star_file(tmp_path):
    path = tmp_path / "star.json"
    path.write_text(json.dumps(STAR))
    return path


def read_manifest(out_dir):
    return json.loads((out_dir / "manifest.json").read_text())


class TestNetgen:
    def test_outputs_and_manifest(self, tmp_path):
        out = tmp_path / "net"
        assert main(["netgen", "--nodes", "100", "--m", "2", "--seed", "7",
                     "--out", str(out)]) == 0
        manifest = read_manifest(out)
        for name, digest in manifest["outputs"].items():
            assert sha256_file(out / name) == digest
        stats = json.loads((out / "stats.json").read_text())
        assert stats["n_edges"] == 3 + 97 * 2

    def test_seed_repeatable(self, tmp_path):
        for d in ("a", "b"):
            main(["netgen", "--nodes", "60", "--m", "2", "--seed", "3",
                  "--out", str(tmp_path / d)])
        assert (tmp_path / "a" / "topology.txt").read_bytes() == \
            (tmp_path / "b" / "topology.txt").read_bytes()

    def test_env_seed(self, tmp_path, monkeypatch):
        monkeypatch.setenv("HLV_SEED", "11")
        main(["netgen", "--nodes", "40", "--m", "2", "--out",
              str(tmp_path / "env")])
        assert read_manifest(tmp_path / "env")["seed"] == 11
        # flag wins over the environment
        main(["netgen", "--nodes", "40", "--m", "2", "--seed", "5", "--out",
              str(tmp_path / "flag")])
        assert read_manifest(tmp_path / "flag")["seed"] == 5


class TestCheck:
    def test_persistent_system_exit_zero(self, tmp_path, system_file):
        out = tmp_path / "chk"
        assert main(["check", "--input", str(system_file), "--out",
                     str(out)]) == 0
        cert = json.loads((out / "certificate.json").read_text())
        assert cert["sign_class"] == "PP"
        assert cert["strong_persistence"]["persistent"]

    def test_infeasible_exit_two(self, tmp_path):
        bad = dict(SYSTEM, r=[1.0, 1.0], A=[[1.0], [2.0]], B=[[1.0, 2.0]],
                   N=2, Gamma=[[0.0, 0.0], [0.0, 0.0]])
        path = tmp_path / "bad_sys.json"
        path.write_text(json.dumps(bad))
        assert main(["check", "--input", str(path), "--out",
                     str(tmp_path / "o")]) == 2

    def test_malformed_input_exit_one(self, tmp_path, capsys):
        path = tmp_path / "broken.json"
        path.write_text(json.dumps({"N": 1, "M": 1, "r": [1.0]}))
        assert main(["check", "--input", str(path), "--out",
                     str(tmp_path / "o")]) == 1
        assert "rbar" in capsys.readouterr().err

    def test_missing_file_exit_one(self, tmp_path):
        assert main(["check", "--input", str(tmp_path / "nope.json"),
                     "--out", str(tmp_path / "o")]) == 1

    def test_unknown_flag_exit_one(self, tmp_path, system_file):
        assert main(["check", "--input", str(system_file), "--out",
                     str(tmp_path / "o"), "--bogus"]) == 1


class TestSimulateAndCanonical:
    def test_trajectory_schema(self, tmp_path, system_file, state_file):
        out = tmp_path / "sim"
        assert main(["simulate", "--input", str(system_file), "--state",
                     str(state_file), "--t-end", "5", "--out", str(out)]) == 0
        lines = (out / "trajectory.csv").read_text().splitlines()
        assert lines[0] == "t,x1,v1"
        assert len(lines) == 1002

    def test_canonical_star_records_energy(self, tmp_path, system_file,
                                           state_file):
        out = tmp_path / "can"
        assert main(["canonical", "--input", str(system_file), "--state",
                     str(state_file), "--t-end", "5", "--out", str(out)]) == 0
        header = (out / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,q,p,H"
        state = json.loads((out / "canonical_state.json").read_text())
        assert state == {"q": [0.0], "p": [0.0], "C": [2.0]}

    def test_svg_emitted_on_request(self, tmp_path, system_file, state_file):
        out = tmp_path / "svg"
        main(["simulate", "--input", str(system_file), "--state",
              str(state_file), "--t-end", "2", "--format", "svg", "--out",
              str(out)])
        svg = (out / "trajectory.svg").read_text()
        assert svg.startswith("<svg") and "polyline" in svg


class TestStar:
    def test_periodic_orbit_report(self, tmp_path, star_file):
        out = tmp_path / "star"
        assert main(["star", "--input", str(star_file), "--E", "3", "--out",
                     str(out)]) == 0
        orbit = json.loads((out / "orbit.json").read_text())
        assert orbit["class"] == "periodic"
        assert orbit["q_minus"] == pytest.approx(-1.8414056604, abs=1e-6)
        assert orbit["q_plus"] == pytest.approx(1.1461932206, abs=1e-6)
        assert orbit["period"] > 0
        profile = (out / "profile.csv").read_text().splitlines()
        assert profile[0] == "q,phi"

    def test_failing_star_exit_two(self, tmp_path):
        path = tmp_path / "bad_star.json"
        path.write_text(json.dumps({"a": [1.0], "b": [-1.0], "rbar": 1.0}))
        assert main(["star", "--input", str(path), "--out",
                     str(tmp_path / "o")]) == 2


class TestAverageAndResonance:
    def test_average_outputs(self, tmp_path, star_file):
        env = {"star": STAR, "epsilon": 0.01, "dbar": 1.0}
        path = tmp_path / "env.json"
        path.write_text(json.dumps(env))
        out = tmp_path / "avg"
        assert main(["average", "--input", str(path), "--E0", "3.0",
                     "--tau-end", "0.3", "--out", str(out)]) == 0
        header = (out / "averaged.csv").read_text().splitlines()[0]
        assert header == "tau,E,C1"
        events = json.loads((out / "events.json").read_text())
        assert events[-1]["kind"] == "stabilized"

    def test_resonance_verdict_schema(self, tmp_path):
        two = {"star1": STAR, "star2": STAR, "atilde1": [0.0],
               "atilde2": [0.0], "btilde1": [0.3], "btilde2": [-0.3],
               "kappa": 0.01, "epsilon": 0.0}
        path = tmp_path / "two.json"
        path.write_text(json.dumps(two))
        out = tmp_path / "res"
        assert main(["resonance", "--input", str(path), "--out",
                     str(out)]) == 2  # unstable pair reports as negative
        verdict = json.loads((out / "verdict.json").read_text())
        for key in ("R", "b12", "b21", "ebar", "lambda_max", "verdict"):
            assert key in verdict
        assert verdict["verdict"] == "unstable"

    def test_resonance_slow_run(self, tmp_path):
        two = {"star1": STAR, "star2": STAR, "atilde1": [0.0],
               "atilde2": [0.0], "btilde1": [0.3], "btilde2": [0.3],
               "kappa": 0.01, "epsilon": 0.0}
        path = tmp_path / "two.json"
        path.write_text(json.dumps(two))
        out = tmp_path / "res"
        assert main(["resonance", "--input", str(path), "--tau-end", "5",
                     "--out", str(out)]) == 0
        header = (out / "slow_trajectory.csv").read_text().splitlines()[0]
        assert header == "tau,Q1,Q2,phi1,phi2"


class TestEnsembleCli:
    def test_census_deterministic_across_workers(self, tmp_path):
        args = ["ensemble", "census", "--n-low", "1", "--n-high", "30",
                "--trials", "120", "--seed", "9"]
        main(args + ["--out", str(tmp_path / "w1"), "--workers", "1"])
        main(args + ["--out", str(tmp_path / "w4"), "--workers", "4"])
        assert (tmp_path / "w1" / "report.json").read_bytes() == \
            (tmp_path / "w4" / "report.json").read_bytes()

    def test_curve_csv_schema(self, tmp_path):
        out = tmp_path / "curve"
        assert main(["ensemble", "curve", "--N", "5", "--mix", "0,0.2",
                     "--trials", "40", "--seed", "2", "--out", str(out)]) == 0
        header = (out / "curve.csv").read_text().splitlines()[0]
        assert header == ("mix,P_periodic,P_periodic_lo,P_periodic_hi,"
                          "P_soliton,P_soliton_lo,P_soliton_hi")

    def test_positive_frequency_report(self, tmp_path):
        out = tmp_path / "t3"
        assert main(["ensemble", "positive-frequency", "--N", "5", "--trials", "200",
                     "--seed", "3", "--out", str(out)]) == 0
        report = json.loads((out / "report.json").read_text())
        assert report["trials"] == 200
        assert 0.0 <= report["frequency"] <= 1.0

    def test_manifest_checksums_verify(self, tmp_path):
        out = tmp_path / "t2"
        main(["ensemble", "cone-frequency", "--M", "2", "--N", "20", "--trials",
              "30", "--seed", "1", "--out", str(out)])
        manifest = read_manifest(out)
        for name, digest in manifest["outputs"].items():
            assert sha256_file(out / name) == digest
        assert manifest["versions"]["hamlv"]
