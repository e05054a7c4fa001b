import json

import numpy as np
import pytest
import yaml

from localdn.cli import build_pairs, main
from localdn.config import ConfigError, ExperimentConfig, load_config


def _write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(data))
    return p


def test_defaults_and_fingerprint():
    a = ExperimentConfig.from_dict({})
    b = ExperimentConfig.from_dict({"grid": {"nodes": 24}})
    assert a.fingerprint() == b.fingerprint()
    c = ExperimentConfig.from_dict({"grid": {"nodes": 20}})
    assert c.fingerprint() != a.fingerprint()
    assert a.grid.nodes == 24 and a.grid.nt == 64


def test_unknown_keys_rejected(tmp_path):
    with pytest.raises(ConfigError, match="unknown"):
        ExperimentConfig.from_dict({"gird": {}})
    with pytest.raises(ConfigError, match="unknown keys in 'grid'"):
        ExperimentConfig.from_dict({"grid": {"node": 3}})
    with pytest.raises(ConfigError, match="cannot"):
        load_config(tmp_path / "missing.yaml")


def test_validation():
    with pytest.raises(ConfigError, match="scenario"):
        ExperimentConfig.from_dict({"coefficients": {"scenario": "weird"}}).validate()
    with pytest.raises(ConfigError, match="workers"):
        ExperimentConfig.from_dict({"workers": 0}).validate()


@pytest.mark.parametrize("scenario", ["gauge", "rotational", "identical", "generic", "born"])
def test_build_pairs(scenario):
    cfg = ExperimentConfig.from_dict({"grid": {"nodes": 9, "nt": 4},
                                      "coefficients": {"scenario": scenario}})
    p1, p2, truth = build_pairs(cfg)
    if scenario == "identical":
        assert p1 is p2
    else:
        assert np.abs(p2.A - p1.A).max() + np.abs(p2.q - p1.q).max() > 0
    assert ("gauge" in truth) == (scenario == "gauge")


def test_cli_forward_convergence_single_level_fails(tmp_path):
    cfg = _write(tmp_path, {"grid": {"levels": [8]}})
    out = tmp_path / "out"
    assert main(["forward-convergence", "--config", str(cfg), "--out", str(out)]) == 2
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "failed"
    assert "levels" in man["report"]["failure"]


def test_cli_bad_config_exit_code(tmp_path):
    cfg = _write(tmp_path, {"nonsense": 1})
    out = tmp_path / "out"
    assert main(["gauge-check", "--config", str(cfg), "--out", str(out)]) == 2
    assert (out / "manifest.json").exists()


def test_cli_forward_convergence_ok(tmp_path):
    cfg = _write(tmp_path, {"grid": {"levels": [6, 12, 24]}})
    out = tmp_path / "out"
    assert main(["forward-convergence", "--config", str(cfg), "--out", str(out)]) == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "ok"
    assert abs(man["report"]["real"]["fitted_order"] - 2.0) < 0.3
    assert "convergence_real.csv" in man["files"]


def test_cli_recover_small(tmp_path):
    data = {"grid": {"nodes": 11, "nt": 16},
            "coefficients": {"scenario": "gauge"},
            "probes": {"xis": [[np.pi, 0.0, 0.0]]},
            "recovery": {"max_frequencies": 1}}
    cfg = _write(tmp_path, data)
    out = tmp_path / "out"
    code = main(["recover", "--config", str(cfg), "--out", str(out), "--mode", "oracle"])
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["report"]["verdict"] in ("gauge-equivalent", "inconclusive", "distinct")
    for name in ("convection_samples.csv", "curl.csv", "fields.npz"):
        assert (out / name).exists()
    cfg_used = load_config(cfg)
    cfg_used.mode = "oracle"
    assert man["config_fingerprint"] == cfg_used.fingerprint()
