import json

import pytest

from blowlab.cli import main
from blowlab.scenario import dumps, load_preset

pytestmark = pytest.mark.filterwarnings("ignore:hypotheses fail")


def _small_ball(tmp_path, name="ball51"):
    scn = load_preset("sigma-critical-ball")
    scn = scn.replace(name=name, geometry={"nodes": 51})
    path = tmp_path / f"{name}.yaml"
    path.write_text(dumps(scn))
    return path


def test_presets_listing(capsys):
    assert main(["presets"]) == 0
    assert "wang" in capsys.readouterr().out.split()


def test_config_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("params: {p: 2}\n")
    assert main(["simulate", "--scenario", str(bad), "--out", str(tmp_path / "o")]) == 2
    assert "params.q" in capsys.readouterr().err
    assert main(["simulate", "--scenario", "no-such-thing"]) == 2


def test_fault_exit_code(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text("params: {p: 2, q: 3}\ninitial_data: 5\nsolver: {max_steps: 5}\n")
    assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path / "s")]) == 3
    assert main(["experiment", "rate", "--scenario", str(path), "--out", str(tmp_path / "e")]) == 3
    verdict = json.loads((tmp_path / "e" / "verdict.json").read_text())
    assert verdict["verdict"] == "FAULT" and verdict["failed_stage"] == "simulate"


def test_fail_exit_code(tmp_path):
    path = tmp_path / "k.yaml"
    path.write_text("problem: kinetic\nparams: {p: 2, q: 3}\n"
                    "system: {m: 3, f: {kind: linear, lam: 0}}\n"
                    "kinetics: {xi: [0, 3, 2], eta: [0, 3, 2], horizon: 1}\n")
    assert main(["kinetics", "sweep", "--scenario", str(path), "--out", str(tmp_path / "k")]) == 1
    text = (tmp_path / "k" / "kinetics.csv").read_text()
    assert "UNCERTIFIED" in text


def test_profile_find(tmp_path, capsys, golden):
    assert main(["profile", "find", "--out", str(tmp_path)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["alpha0"] == pytest.approx(golden.alpha0, rel=1e-6)
    assert (tmp_path / "profile.json").is_file()


def test_experiment_determinism_and_plotdata(tmp_path):
    path = _small_ball(tmp_path)
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["experiment", "thm1.2", "--scenario", str(path), "--out", str(a)]) == 0
    assert main(["experiment", "thm1.2", "--scenario", str(path), "--out", str(b)]) == 0
    assert (a / "verdict.json").read_bytes() == (b / "verdict.json").read_bytes()
    assert (a / "supnorm.csv").read_bytes() == (b / "supnorm.csv").read_bytes()
    verdict = json.loads((a / "verdict.json").read_text())
    assert verdict["verdict"] == "PASS"
    assert set(verdict["artifacts"]) >= {"scenario.yaml", "supnorm.csv", "summary.json",
                                         "lower_certificate.json", "verdict.json", "metadata.json"}
    assert (a / "scenario.yaml").read_text().startswith(f"# scenario_digest={verdict['scenario_digest']}")
    assert main(["plotdata", str(a)]) == 0
    manifest = json.loads((a / "plots" / "manifest.json").read_text())
    assert manifest["count"] == 3
    assert manifest["scenario_digest"] == verdict["scenario_digest"]


def test_plotdata_empty_bundle(tmp_path):
    assert main(["plotdata", str(tmp_path), "--out", str(tmp_path / "p")]) == 0
    assert json.loads((tmp_path / "p" / "manifest.json").read_text())["count"] == 0


def test_multiple_scenarios_parallel(tmp_path, capsys):
    p1 = _small_ball(tmp_path, "one")
    p2 = _small_ball(tmp_path, "two")
    out = tmp_path / "multi"
    code = main(["experiment", "thm1.2", "--scenario", str(p1), "--scenario", str(p2),
                 "--out", str(out), "--jobs", "2"])
    assert code == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert [l["scenario"] for l in lines] == ["one", "two"]
    assert (out / "one" / "verdict.json").is_file() and (out / "two" / "verdict.json").is_file()


def test_thm13_wrong_zero_set_fails(tmp_path):
    scn = load_preset("wang").replace(a_spec={"zero_set": [0.5]})
    path = tmp_path / "w.yaml"
    path.write_text(dumps(scn))
    assert main(["experiment", "thm1.3", "--scenario", str(path), "--out", str(tmp_path / "w")]) == 1


def test_plotdata_kinetics_only_bundle(tmp_path):
    path = tmp_path / "k.yaml"
    path.write_text("problem: kinetic\nparams: {p: 2, q: 3}\nsystem: {m: 3}\n"
                    "kinetics: {xi: [0, 3, 2], eta: [0, 3, 2], horizon: 1}\n")
    assert main(["kinetics", "sweep", "--scenario", str(path), "--out", str(tmp_path / "b")]) == 0
    manifest_path = tmp_path / "b" / "plots" / "manifest.json"
    assert main(["plotdata", str(tmp_path / "b")]) == 0
    manifest = json.loads(manifest_path.read_text())
    assert [f["file"] for f in manifest["figures"]] == ["fig_kinetics_heatmap.csv"]
    assert manifest["scenario_digest"]
