import pytest

from hflsim.config import (
    ConfigError,
    REDEPLOY_STRATEGIES,
    SELECTION_STRATEGIES,
    build,
    canonical_dump,
    config_hash,
    parse_file,
    parse_text,
)


def test_defaults_build():
    cfg = build({})
    assert cfg.seed == 0
    assert cfg.fleet.n_uavs == 5
    assert cfg.fleet.n_devices == 150
    assert cfg.fleet.coverage_radius == 5000.0
    assert cfg.strategy.selection == "adaptive-TD3"
    assert cfg.strategy.redeploy == "two-stage-greedy"
    assert cfg.strategy.max_rounds == 50
    assert cfg.strategy.k_max == 10


def test_parse_text_basic():
    got = parse_text(
        """
        # a comment line
        seed = 7

        fleet.n_uavs = 3           # trailing comment
        learner.eta = 0.05
        strategy.selection = random
        """
    )
    assert got == {
        "seed": 7,
        "fleet.n_uavs": 3,
        "learner.eta": 0.05,
        "strategy.selection": "random",
    }


def test_parse_text_unknown_key():
    with pytest.raises(ConfigError) as ei:
        parse_text("fleet.n_wings = 3")
    assert "fleet.n_wings" in str(ei.value)
    assert ei.value.key == "fleet.n_wings"


def test_parse_text_duplicate_key():
    with pytest.raises(ConfigError) as ei:
        parse_text("seed = 1\nseed = 2")
    assert ei.value.key == "seed"


def test_parse_text_bad_value_names_key():
    with pytest.raises(ConfigError) as ei:
        parse_text("fleet.n_uavs = many")
    assert ei.value.key == "fleet.n_uavs"


def test_parse_text_malformed_line():
    with pytest.raises(ConfigError):
        parse_text("fleet.n_uavs 3")


def test_parse_file_roundtrip(tmp_path):
    p = tmp_path / "run.cfg"
    p.write_text("seed = 11\nfleet.xi = 0.4\n")
    assert parse_file(p) == {"seed": 11, "fleet.xi": 0.4}


def test_build_type_checks():
    # ints promote to floats where a float is expected
    cfg = build({"learner.eta": 1})
    assert cfg.learner.eta == 1.0
    with pytest.raises(ConfigError):
        build({"fleet.n_uavs": 2.5})
    with pytest.raises(ConfigError):
        build({"fleet.n_uavs": True})


def test_build_unknown_key():
    with pytest.raises(ConfigError):
        build({"nosuch.key": 1})


def test_build_validates_strategy_names():
    for name in SELECTION_STRATEGIES:
        build({"strategy.selection": name})
    with pytest.raises(ConfigError):
        build({"strategy.selection": "psychic"})
    for name in REDEPLOY_STRATEGIES:
        build({"strategy.redeploy": name})
    with pytest.raises(ConfigError):
        build({"strategy.redeploy": "teleport"})


def test_build_validates_weight_sums():
    with pytest.raises(ConfigError):
        build({"strategy.lambda1": 0.9})  # 0.9+0.2+0.2 != 1
    build({"strategy.lambda1": 0.5, "strategy.lambda2": 0.3, "strategy.lambda3": 0.2})


def test_build_validates_ranges():
    with pytest.raises(ConfigError):
        build({"fleet.n_uavs": 0})
    with pytest.raises(ConfigError):
        build({"fleet.xi": 1.5})
    with pytest.raises(ConfigError):
        build({"device.phi": 0.0})
    with pytest.raises(ConfigError):
        build({"strategy.fixed_beta": -0.1})
    with pytest.raises(ConfigError):
        build({"seed": -1})


def test_canonical_dump_sorted_and_stable():
    cfg = build({"seed": 3, "fleet.xi": 0.25})
    dump = canonical_dump(cfg)
    lines = [ln for ln in dump.splitlines() if ln]
    assert lines == sorted(lines)
    assert "seed = 3" in lines
    assert "fleet.xi = 0.25" in lines
    assert canonical_dump(cfg) == dump


def test_canonical_dump_parses_back():
    cfg = build({"seed": 5, "learner.eta": 0.05, "strategy.selection": "random"})
    again = build(parse_text(canonical_dump(cfg)))
    assert canonical_dump(again) == canonical_dump(cfg)


def test_config_hash_sensitivity():
    h0 = config_hash(build({}))
    h1 = config_hash(build({"seed": 1}))
    h2 = config_hash(build({"fleet.xi": 0.31}))
    assert len(h0) == 64 and all(c in "0123456789abcdef" for c in h0)
    assert h0 != h1 and h0 != h2 and h1 != h2
    assert config_hash(build({})) == h0


def test_section_objects_are_usable():
    cfg = build({})
    td3 = cfg.p2.td3()
    assert td3.gamma == 0.99
    assert cfg.p1.h0 == 5.0
    assert cfg.p3.d_set == 250.0
    assert cfg.channel.alpha_d2u == 2.0
