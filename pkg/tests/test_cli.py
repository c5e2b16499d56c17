import json

import pytest

from vibronlab import io
from vibronlab.cli import main


def test_presets_listed(capsys):
    assert main(["presets"]) == 0
    assert capsys.readouterr().out.split() == io.preset_names()


def test_cool_prints_both_reservoirs(capsys):
    assert main(["cool"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].split()[0] == "side"
    left, right = lines[1].split(), lines[2].split()
    assert left[:3] == ["left", "0", "Mg24"] and right[:3] == ["right", "2", "Mg24"]
    assert float(left[3]) == pytest.approx(86e3, rel=0.05)
    assert float(right[5]) == pytest.approx(1.63, rel=0.05)


def test_steady_writes_outputs(tmp_path, capsys):
    assert main(["steady", "--preset", "tqd", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "manifest.json").exists()
    assert "wrote" in capsys.readouterr().out


def test_set_override_lands_in_manifest(tmp_path):
    assert main(["run", "tqd", "--set", "params.reservoirs.left.rabi_gamma=0.5", "--out", str(tmp_path)]) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["inputs"]["params"]["reservoirs"]["left"]["rabi_gamma"] == 0.5


def test_env_overrides_apply(tmp_path, monkeypatch):
    monkeypatch.setenv("VIBRONLAB_OUT", str(tmp_path))
    monkeypatch.setenv("VIBRONLAB_SEED", "9")
    assert main(["steady", "--preset", "tqd"]) == 0
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["seeds"]["seed"] == 9


def test_wrong_scenario_for_command(capsys):
    assert main(["fano", "--preset", "tqd"]) == 2
    assert "fano" in capsys.readouterr().err


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "c.json"
    tree = io.load_preset("tqd")
    tree["params"]["chain"]["trap"]["axial_freq_hz"] = -1.0
    p.write_text(json.dumps(tree))
    assert main(["validate", str(p)]) == 2
    assert "params.chain.trap.axial_freq_hz" in capsys.readouterr().err
    tree["params"]["chain"]["trap"]["axial_freq_hz"] = 5e5
    p.write_text(json.dumps(tree))
    assert main(["validate", str(p)]) == 0
    assert main(["steady", "--config", str(p), "--preset", "tqd"]) == 2


def test_evolve(tmp_path):
    assert main(["evolve", "--preset", "tqd", "--t-final", "1e-4", "--n-out", "11", "--out", str(tmp_path)]) == 0
    t = io.read_csv(tmp_path / "relaxation.csv")
    assert len(t.columns["time_s"]) == 11
