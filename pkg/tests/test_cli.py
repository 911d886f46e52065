import csv
import json
from pathlib import Path

import pytest

from qbsvie.cli import (SCHEMA, ConfigError, ResultBundle, RunConfig, apply_overrides, emit, load_config,
                        main, run)

ROOT = Path(__file__).resolve().parents[1]


def cfg(**kw):
    base = {"experiment": "solve-type1", "driver": {"N": 4},
            "generator": [{"name": "linear_y", "a": 0.5}, {"name": "quadratic_half"}],
            "position": {"payoff": "linear_terminal"}}
    base.update(kw)
    return RunConfig.from_dict(base)


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    return lines[0], list(csv.DictReader(lines[1:]))


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        cfg(colour="blue")
    with pytest.raises(ConfigError):
        cfg(driver={"N": 4, "steps": 3})
    with pytest.raises(ConfigError):
        cfg(experiment="nope")
    with pytest.raises(ConfigError):
        cfg(driver={"N": 0})


def test_overrides():
    raw = {"driver": {"N": 4}, "generator": [{"name": "linear_y", "a": 0.5}]}
    out = apply_overrides(raw, ["driver.N=50", "generator.0.a=0.3", "driver.backend=path-tree"])
    assert out["driver"] == {"N": 50, "backend": "path-tree"}
    assert out["generator"][0]["a"] == 0.3 and raw["driver"]["N"] == 4
    with pytest.raises(ConfigError):
        apply_overrides(raw, ["driver.N"])


def test_z_dump_triangle(tmp_path):
    c = cfg()
    bundle = run(c)
    emit(bundle, tmp_path, "both")
    header, rows = read_csv(tmp_path / "Z.csv")
    assert len(rows) == 15
    assert c.config_hash in header and "seed=0" in header
    _, yrows = read_csv(tmp_path / "Y.csv")
    assert len(yrows) == 5
    assert ResultBundle.from_json((tmp_path / "bundle.json").read_text()) == bundle


def test_json_round_trip_all_kinds():
    configs = [
        cfg(),
        cfg(experiment="solve-type2", driver={"backend": "path-tree", "N": 4},
            generator=[{"name": "quadratic_half"}, {"name": "zprime_sine", "c": 0.1}]),
        cfg(experiment="partition-convergence", driver={"N": 16}, levels=[2, 4, 8]),
        cfg(experiment="risk-axioms", driver={"N": 6}, generator={"name": "entropic", "gamma": 2.0},
            risk={"instances": 2, "seed": 1}),
        cfg(experiment="bsde-oracle", generator={"name": "quadratic_half"}, position={"payoff": "terminal"},
            levels=[4, 8]),
        cfg(experiment="inconsistency-demo", driver={"N": 10}),
    ]
    for c in configs:
        b = run(c)
        assert ResultBundle.from_json(b.to_json()) == b
        assert b.provenance["config_hash"] == c.config_hash


def test_bsde_oracle_table(tmp_path):
    c = cfg(experiment="bsde-oracle", generator={"name": "quadratic_half"},
            position={"payoff": "terminal"}, levels=[25, 50, 100])
    b = run(c)
    assert b.summary["oracle"] == 0.5 and b.summary["error"] < 3e-3
    emit(b, tmp_path, "csv")
    _, rows = read_csv(tmp_path / "convergence.csv")
    assert len(rows) == 3 and list(rows[0]) == ["N", "error", "ratio"]
    assert [int(r["N"]) for r in rows] == [25, 50, 100]
    assert 1.7 < float(rows[2]["ratio"]) < 2.3


def test_deterministic_bundle():
    c = cfg(driver={"N": 12})
    assert run(c).to_json() == run(cfg(driver={"N": 12})).to_json()
    assert c.config_hash == cfg(driver={"N": 12}, output={"dir": "elsewhere"}).config_hash
    assert c.config_hash != cfg(driver={"N": 13}).config_hash


def test_main_success(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"experiment": "inconsistency-demo", "driver": {"N": 8},
                                "generator": [{"name": "linear_y", "a": 0.5}, {"name": "quadratic_half"}],
                                "position": {"payoff": "linear_terminal"}}))
    assert main(["--config", str(path), "--out", str(tmp_path / "o"), "--format", "json",
                 "--override", "driver.N=10"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["summary"]["gap_exceeds_10x_tolerance"]
    saved = json.loads((tmp_path / "o" / "bundle.json").read_text())
    assert saved["provenance"]["config"]["driver"]["N"] == 10


def test_main_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "solve-type1", "generator": {"name": "zero"},
                               "position": {"payoff": "constant", "c": 1}, "extra": 1}))
    assert main(["--config", str(bad)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "config"
    lat = tmp_path / "lat.json"
    lat.write_text(json.dumps({"experiment": "solve-type1", "driver": {"N": 4},
                               "generator": {"name": "zero"}, "position": {"payoff": "running_max"}}))
    assert main(["--config", str(lat), "--out", str(tmp_path / "x")]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "DriverError" and err["experiment"] == "solve-type1"
    assert main(["--config", str(tmp_path / "missing.json")]) == 2


def test_schema_published():
    assert json.loads((ROOT / "docs" / "config.schema.json").read_text()) == SCHEMA


@pytest.mark.parametrize("path", sorted((ROOT / "configs").glob("*.json")), ids=lambda p: p.name)
def test_shipped_configs_validate(path):
    load_config(path)
