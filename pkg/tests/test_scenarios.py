import json
from pathlib import Path

import pytest

from dynkinlab.errors import ConfigError
from dynkinlab.scenarios import (
    GAME_DEFAULTS,
    OUTPUT_ENV,
    SCENARIOS,
    config_reference,
    parse_config,
    parse_config_dict,
    run_scenario,
)

ROOT = Path(__file__).resolve().parents[1]


def test_minimal_config_gets_defaults():
    cfg = parse_config_dict({"scenario": "E2-trivial-equilibrium"})
    assert cfg.game.dt == 1e-3 and cfg.game.n_paths == 100_000
    assert (cfg.game.x1, cfg.game.x2) == (1.0, 2.0)
    assert cfg.game.reward.kind == "affine"


@pytest.mark.parametrize("scenario", SCENARIOS)
def test_every_scenario_parses(scenario):
    cfg = parse_config_dict({"scenario": scenario})
    assert cfg.game.t_max == GAME_DEFAULTS[scenario]["T_max"]


def test_unknown_key_is_named():
    doc = {"scenario": "E2-trivial-equilibrium", "game": {"reward": {"kind": "power-tail", "gama": 2}}}
    with pytest.raises(ConfigError) as info:
        parse_config_dict(doc)
    assert "gama" in str(info.value)
    assert info.value.pointer == "/game/reward/gama"


def test_top_level_unknown_key():
    with pytest.raises(ConfigError) as info:
        parse_config_dict({"scenario": "E4-fkg", "sed": 1})
    assert info.value.pointer == "/sed"


def test_zero_dt_is_rejected():
    with pytest.raises(ConfigError) as info:
        parse_config_dict({"scenario": "E2-trivial-equilibrium", "game": {"dt": 0}})
    assert info.value.pointer == "/game/dt"
    assert "dt" in info.value.reason


def test_type_mismatch_pointer():
    with pytest.raises(ConfigError) as info:
        parse_config_dict({"scenario": "E4-fkg", "game": {"n_paths": "many"}})
    assert info.value.pointer == "/game/n_paths"


def test_unknown_scenario():
    with pytest.raises(ConfigError) as info:
        parse_config_dict({"scenario": "E9"})
    assert info.value.pointer == "/scenario"


def test_parse_config_file(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"scenario": "E6-novikov", "output_dir": "out"}))
    cfg = parse_config(p)
    assert cfg.output_dir == "out"
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert parse_config_dict({"scenario": "E4-fkg"}).output_dir == str(tmp_path / "env")


def test_reference_page_is_current():
    assert (ROOT / "docs" / "config-reference.md").read_text(encoding="utf-8") == config_reference()


def _small_e6(tmp_path, name, workers):
    return parse_config_dict({"scenario": "E6-novikov", "output_dir": str(tmp_path / name), "workers": workers,
                              "game": {"n_paths": 20_000, "T_max": 100.0}})


def test_manifest_lists_every_file(tmp_path):
    res = run_scenario(_small_e6(tmp_path, "a", 1))
    out = tmp_path / "a"
    m = json.loads((out / "manifest.json").read_text())
    assert sorted(p.name for p in out.iterdir()) == sorted(m["files"])
    for key in ("config", "seed", "thresholds", "versions", "platform", "wall_clock", "checks"):
        assert key in m
    assert m["passed"] == res.passed
    assert (out / "verdicts.txt").read_text().startswith(("PASS", "FAIL"))


def test_outputs_identical_across_workers(tmp_path):
    run_scenario(_small_e6(tmp_path, "one", 1))
    run_scenario(_small_e6(tmp_path, "four", 4))
    for name in ("e6_novikov.csv", "verdicts.txt"):
        assert (tmp_path / "one" / name).read_bytes() == (tmp_path / "four" / name).read_bytes()


def test_e2_payoffs_file(tmp_path):
    cfg = parse_config_dict({"scenario": "E2-trivial-equilibrium", "output_dir": str(tmp_path),
                             "game": {"n_paths": 20_000}})
    res = run_scenario(cfg)
    assert res.passed and res.exit_status == 0
    text = (tmp_path / "e2_payoffs.csv").read_text()
    assert "0.5" in text and "1" in text
