from __future__ import annotations

import csv
import json
from pathlib import Path

import pytest

from yieldlab import config
from yieldlab.cli import SUBCOMMANDS, main, run
from yieldlab.exceptions import ConfigError, PresetReferenceError

CONFIGS = Path(config.__file__).parent / "configs"


def snapshot(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def write_config(tmp_path: Path, doc: dict) -> Path:
    p = tmp_path / "scenario.json"
    p.write_text(json.dumps(doc))
    return p


def test_verify_reference_config_passes(tmp_path, capsys):
    assert main(["verify", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    suites = {line.split()[1].split(".")[0] for line in out.splitlines()}
    assert suites == {"pricing", "tokenizer", "lending", "amm", "aggregation", "fixed_rate", "staking"}


def test_zero_yield_prices_are_zero(tmp_path):
    assert main(["price", "--config", str(CONFIGS / "zero_yield.json"), "--out", str(tmp_path)]) == 0
    for name in ("tokens.csv", "futures.csv"):
        with open(tmp_path / "price" / name) as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        for r in rows:
            for k, v in r.items():
                if "price" in k or "stderr" in k:
                    assert float(v) == 0.0


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_rerun_is_byte_identical(tmp_path, command):
    assert main([command, "--seed", "7", "--out", str(tmp_path / "a")]) in (0, 1)
    assert main([command, "--seed", "7", "--out", str(tmp_path / "b")]) in (0, 1)
    a, b = snapshot(tmp_path / "a"), snapshot(tmp_path / "b")
    assert a and a == b


def test_json_format(tmp_path):
    assert main(["stake", "--format", "json", "--out", str(tmp_path)]) == 0
    doc = json.loads((tmp_path / "stake" / "insurance.json").read_text())
    assert doc["name"] == "insurance"
    assert "discrepancy" in [r["quantity"] for r in doc["rows"]]


def test_seed_changes_monte_carlo_output(tmp_path):
    main(["price", "--seed", "1", "--out", str(tmp_path / "a")])
    main(["price", "--seed", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a/price/tokens.csv").read_bytes() != (tmp_path / "b/price/tokens.csv").read_bytes()


def test_unknown_key_is_a_config_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {"include": ["base"], "seed": 1, "pricing": {"maturites": [1.0]}})
    assert main(["price", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "config error" in err and "pricing" in err and "maturites" in err


def test_missing_seed_is_rejected(tmp_path):
    cfg = write_config(tmp_path, {"include": ["base"]})
    with pytest.raises(ConfigError):
        config.load(cfg)
    assert main(["stake", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_missing_preset_is_a_reference_error(tmp_path, capsys):
    cfg = write_config(tmp_path, {"include": ["no_such_preset"], "seed": 1})
    with pytest.raises(PresetReferenceError) as info:
        config.load(cfg)
    assert info.value.path == "include.0"
    assert main(["stake", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_unknown_model_preset(tmp_path):
    cfg = write_config(tmp_path, {"include": ["base"], "seed": 1, "model": {"preset": "heston"}})
    with pytest.raises(PresetReferenceError):
        config.load(cfg)


def test_include_cycle(tmp_path):
    (tmp_path / "a.json").write_text(json.dumps({"include": ["b.json"], "seed": 1}))
    (tmp_path / "b.json").write_text(json.dumps({"include": ["a.json"]}))
    with pytest.raises(PresetReferenceError):
        config.load(tmp_path / "a.json")


def test_relative_include_and_merge(tmp_path):
    (tmp_path / "shared.json").write_text(json.dumps({"include": ["base"], "paths": 500}))
    cfg = write_config(tmp_path, {"include": ["shared.json"], "seed": 3, "pricing": {"x0": 50}})
    loaded = config.load(cfg)
    assert loaded["paths"] == 500 and loaded["seed"] == 3
    assert loaded["pricing"]["x0"] == 50
    assert loaded["pricing"]["maturities"] == [0.5, 1]


def test_preset_change_replaces_model_block():
    loaded = config.load(CONFIGS / "deterministic.json")
    assert loaded["model"]["preset"] == "deterministic"
    assert "sigma" not in loaded["model"]


def test_set_overrides(tmp_path):
    loaded = config.load(None, ["pool.gamma=1.5", "agents.0.notional=2", "staking.slash_prob=0.02"])
    assert loaded["pool"]["gamma"] == 1.5
    assert loaded["agents"][0]["notional"] == 2
    assert main(["hedge", "--set", "pool.gamma=0.5", "--out", str(tmp_path)]) == 2
    with pytest.raises(ConfigError):
        config.apply_override({}, "no-equals-sign")


def test_out_flag_not_part_of_artifacts(tmp_path):
    main(["stake", "--out", str(tmp_path)])
    resolved = json.loads((tmp_path / "stake" / "config.json").read_text())
    assert "output" not in resolved and resolved["seed"] == 20240601


def test_run_rejects_unknown_subcommand():
    with pytest.raises(ValueError):
        run("plot")
