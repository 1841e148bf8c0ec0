import json

import numpy as np
import pytest

from clfac import cli
from clfac.config import (ContourSpec, ExperimentConfig, config_from_dict,
                          load_config)
from clfac.errors import ConfigError
from clfac.simulator import read_trajectory_csv


def test_defaults_validate():
    cfg = ExperimentConfig()
    cfg.validate()
    rc = cfg.run_config("nominal")
    rc.validate()
    assert rc.delta == cfg.delta
    assert np.array_equal(rc.x0, np.array(cfg.x0))


def test_from_dict_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="unknown configuration keys"):
        config_from_dict({"deltaa": 0.01})
    with pytest.raises(ConfigError, match="unknown contour keys"):
        config_from_dict({"contour": {"densty": 5}})


def test_from_dict_converts_sequences():
    cfg = config_from_dict({"x0": [-1.0, 0.5, 0.2],
                            "contour": {"x1_range": [-1, 1], "density": 3}})
    assert cfg.x0 == (-1.0, 0.5, 0.2)
    assert cfg.contour.x1_range == (-1, 1)
    assert cfg.contour.density == 3
    assert cfg.contour.x2_range == (-1.2, 1.2)


def test_from_dict_validates_semantics():
    with pytest.raises(ConfigError):
        config_from_dict({"r": 3.0})          # target outside starting ball
    with pytest.raises(ConfigError):
        config_from_dict({"system": "cart"})
    with pytest.raises(ConfigError):
        config_from_dict({"contour": {"density": 0}})
    with pytest.raises(ConfigError):
        config_from_dict([1, 2, 3])


def test_round_trip_through_dict():
    cfg = ExperimentConfig()
    again = config_from_dict(cfg.to_dict())
    assert again == cfg


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(str(tmp_path / "missing.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(str(bad))


def test_shipped_configs_parse():
    a = load_config("configs/case_study.json")
    assert a.controller == "both"
    assert a.delta == 0.01
    b = load_config("configs/contour.json")
    assert b.contour.density == 13
    assert b.R == 1.75


def _write_cfg(tmp_path, **kw):
    base = dict(x0=[0.01, 0.0, 0.0], horizon_steps=10, substeps=10,
                out_dir=str(tmp_path / "out"))
    base.update(kw)
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(base))
    return str(p)


def test_cli_usage_errors(capsys):
    # argparse exits directly on malformed command lines
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2
    capsys.readouterr()


def test_cli_config_errors(tmp_path, capsys):
    p = tmp_path / "cfg.json"
    p.write_text("{broken")
    assert cli.main(["bounds", "--config", str(p)]) == 2
    p.write_text(json.dumps({"r": 9.0}))
    assert cli.main(["bounds", "--config", str(p)]) == 2
    p.write_text(json.dumps({"x0": [99.0, 0.0, 0.0], "horizon_steps": 5}))
    assert cli.main(["simulate", "--config", str(p)]) == 2
    capsys.readouterr()


def test_cli_bounds_document(tmp_path, capsys):
    cfg = _write_cfg(tmp_path)
    assert cli.main(["bounds", "--config", cfg]) == 0
    out = capsys.readouterr().out
    doc = json.loads((tmp_path / "out" / "bounds.json").read_text())
    assert json.loads(out) == doc
    for key in ("bounds", "radii", "j_bar", "delta_eff", "certification",
                "membership", "warnings"):
        assert key in doc
    assert doc["bounds"]["delta_bar"] == 0.001
    assert doc["bounds"]["eps1_window"] is not None
    assert doc["radii"]["r_star"] > 0.0
    assert doc["membership"]["delta"]["verdict"] in ("inside", "above",
                                                     "below")


def test_cli_simulate_writes_everything(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, controller="both")
    assert cli.main(["simulate", "--config", cfg]) == 0
    out_dir = tmp_path / "out"
    assert (out_dir / "trajectory_nominal.csv").exists()
    assert (out_dir / "trajectory_actor_critic.csv").exists()
    summary = json.loads((out_dir / "summary.json").read_text())
    assert set(summary) >= {"nominal", "ac"}
    assert summary["nominal"]["reaching_time"] == 0.0
    text = capsys.readouterr().out
    assert "nominal" in text and "ac" in text


def test_cli_simulate_controller_flag(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, controller="both")
    assert cli.main(["simulate", "--config", cfg, "--controller",
                     "nominal"]) == 0
    out_dir = tmp_path / "out"
    assert (out_dir / "trajectory_nominal.csv").exists()
    assert not (out_dir / "trajectory_actor_critic.csv").exists()
    capsys.readouterr()


def test_cli_contour_outputs(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, contour={"x1_range": [0.0, 0.0],
                                        "x2_range": [0.0, 0.0],
                                        "density": 1, "x3_0": 0.0})
    assert cli.main(["contour", "--config", cfg]) == 0
    out_dir = tmp_path / "out"
    lines = (out_dir / "contour.csv").read_text().strip().split("\n")
    assert len(lines) == 2
    summary = json.loads((out_dir / "contour_summary.json").read_text())
    assert summary["points"] == 1
    assert summary["defined"] == 1
    assert summary["median_ratio_pct"] == 100.0
    capsys.readouterr()


def test_cli_validate_passes(tmp_path, capsys):
    cfg = _write_cfg(tmp_path, controller="both", x0=[-1.0, 0.8, 0.3],
                     horizon_steps=400)
    assert cli.main(["validate", "--config", cfg]) == 0
    text = capsys.readouterr().out
    assert "PASS" in text and "FAIL" not in text
    assert (tmp_path / "out" / "validate_nominal.csv").exists()


def test_cli_reproducible_bytes(tmp_path, capsys):
    cfg1 = _write_cfg(tmp_path, controller="nominal", x0=[-1.2, 0.9, 0.3],
                      horizon_steps=150, out_dir=str(tmp_path / "a"))
    assert cli.main(["simulate", "--config", cfg1]) == 0
    cfg2 = _write_cfg(tmp_path, controller="nominal", x0=[-1.2, 0.9, 0.3],
                      horizon_steps=150, out_dir=str(tmp_path / "b"))
    assert cli.main(["simulate", "--config", cfg2]) == 0
    a = (tmp_path / "a" / "trajectory_nominal.csv").read_bytes()
    b = (tmp_path / "b" / "trajectory_nominal.csv").read_bytes()
    assert a == b
    cols = read_trajectory_csv(str(tmp_path / "a" / "trajectory_nominal.csv"))
    assert len(cols["k"]) == 151
    capsys.readouterr()


def test_cli_overrides_reach_run_config(tmp_path):
    cfg_path = _write_cfg(tmp_path, controller="both", seed=5)
    args = cli.build_parser().parse_args(
        ["simulate", "--config", cfg_path, "--seed", "99", "--controller",
         "ac", "--out", str(tmp_path / "elsewhere")])
    cfg = cli._load_config(args)
    assert cfg.seed == 99
    assert cfg.controller == "ac"
    assert cfg.out_dir == str(tmp_path / "elsewhere")
    assert cfg.run_config("ac").seed == 99
