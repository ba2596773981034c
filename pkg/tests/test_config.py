import pytest

from predtoll.config import ConfigError, CycleConfig, TollSettings, apply_overrides, load_config, parse_clock

from .conftest import TOY_CONFIG


def test_toy_config_loads(toy_config):
    c = toy_config.cycle
    assert (c.delta, c.horizon, c.period, c.n_cycles) == (300.0, 3, 4800.0, 16)
    assert c.peak == (2100.0, 3300.0)
    assert toy_config.network.exists() and toy_config.demand.exists()
    assert toy_config.replication_seeds == tuple(1000 + r for r in range(10))


def test_cycle_windows():
    c = CycleConfig(delta=300, warmup=600, tolling=900, post=300)
    assert [c.in_tolling(t) for t in (0, 599, 600, 1499, 1500)] == [False, False, True, True, False]
    with pytest.raises(ConfigError, match="does not divide"):
        CycleConfig(delta=400, warmup=600)
    with pytest.raises(ConfigError):
        CycleConfig(horizon=1)
    with pytest.raises(ConfigError):
        CycleConfig(peak=(0.0, 100.0))
    with pytest.raises(ConfigError):
        TollSettings(lower=3, upper=2)


def test_parse_clock():
    assert parse_clock("08:30") == 30600.0
    assert parse_clock("00:00:45") == 45.0
    assert parse_clock("120") == 120.0


def test_overrides():
    raw = {"network": "n", "demand": "d", "cycle": {"delta": 300}}
    out = apply_overrides(raw, ["delta=60", "ga.population_size=4", "replications=2", "scenarios=[no_toll]"])
    assert out["cycle"]["delta"] == 60
    assert out["ga"] == {"population_size": 4}
    assert out["replications"] == 2 and out["scenarios"] == ["no_toll"]
    assert raw["cycle"]["delta"] == 300
    with pytest.raises(ConfigError):
        apply_overrides(raw, ["bogus=1"])
    with pytest.raises(ConfigError):
        apply_overrides(raw, ["cycle.bogus=1"])
    with pytest.raises(ConfigError):
        apply_overrides(raw, ["delta"])


def test_override_applied_on_load():
    cfg = load_config(TOY_CONFIG, ["delta=60", "peak=null"])
    assert cfg.cycle.delta == 60.0 and cfg.cycle.peak is None


def test_missing_file_named(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("network: nowhere.txt\ndemand: d.csv\n")
    with pytest.raises(ConfigError, match="nowhere.txt"):
        load_config(p)


def test_bad_configs(tmp_path):
    p = tmp_path / "c.yaml"
    for text in ("network: [unclosed\n", "- a\n- b\n", "network: a\n", "network: a\ndemand: b\nwhat: 1\n",
                 "network: a\ndemand: b\ncycle: {delta: 300, nope: 1}\n", "network: a\ndemand: b\nscenarios: [x]\n"):
        p.write_text(text)
        with pytest.raises(ConfigError):
            load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.yaml")
