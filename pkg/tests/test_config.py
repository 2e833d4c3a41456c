import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eiwv.config import (
    ExperimentConfig,
    apply_env_overrides,
    apply_overrides,
    dump_config,
    load_config,
    parse_config,
)
from eiwv.env import ConfigError


def test_defaults_mirror_reference_settings():
    cfg = ExperimentConfig()
    assert cfg.crowd.collusion_rate == 50 and cfg.crowd.h == 10
    assert cfg.env.p_max == 11 and cfg.env.tasks_per_step == 10 and cfg.env.window == 200
    assert cfg.run.seeds == (1, 2, 3, 4, 5)
    cfg.validate()


def test_roundtrip_defaults():
    cfg = ExperimentConfig()
    assert parse_config(dump_config(cfg)) == cfg


@settings(max_examples=40, deadline=None)
@given(
    alpha=st.floats(0, 1),
    eta=st.one_of(st.none(), st.floats(0, 1)),
    rate=st.integers(1, 500),
    collusion=st.booleans(),
    seeds=st.lists(st.integers(0, 10_000), min_size=1, max_size=6),
    hidden=st.lists(st.integers(1, 128), min_size=1, max_size=3),
    mode=st.sampled_from(["a2c_is_oracle", "a2c_plain", "fixed", "dqn_uniform"]),
)
def test_roundtrip_property(alpha, eta, rate, collusion, seeds, hidden, mode):
    cfg = apply_overrides(
        ExperimentConfig(),
        {"env.alpha": alpha, "env.eta": eta, "crowd.collusion_rate": rate, "crowd.collusion": collusion,
         "run.seeds": seeds, "agent.hidden_sizes": hidden, "agent.mode": mode},
    )
    assert parse_config(dump_config(cfg)) == cfg


def test_parse_comments_and_errors():
    cfg = parse_config("# comment\n\nenv.alpha = 0.3  # trailing\nrun.seeds = 4,2\n")
    assert cfg.env.alpha == 0.3 and cfg.run.seeds == (4, 2)
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config("env.alhpa = 0.3")
    with pytest.raises(ConfigError, match="section"):
        parse_config("bogus.alpha = 0.3")
    with pytest.raises(ConfigError, match="duplicate"):
        parse_config("env.alpha = 0.3\nenv.alpha = 0.4")
    with pytest.raises(ConfigError, match="line 1"):
        parse_config("just words")
    with pytest.raises(ConfigError, match="bad value"):
        parse_config("env.window = many")
    with pytest.raises(ConfigError):
        parse_config("crowd.collusion = maybe")


def test_env_overrides():
    cfg = apply_env_overrides(ExperimentConfig(), {"EIWV_ENV__ALPHA": "0.4", "EIWV_RUN__SEEDS": "7", "OTHER": "x"})
    assert cfg.env.alpha == 0.4 and cfg.run.seeds == (7,)
    with pytest.raises(ConfigError):
        apply_env_overrides(ExperimentConfig(), {"EIWV_ENV__NOPE": "1"})


def test_load_config_file_then_env(tmp_path):
    p = tmp_path / "exp.cfg"
    p.write_text("env.alpha = 0.1\nagent.mode = a2c_is\n")
    cfg = load_config(p, environ={"EIWV_ENV__ALPHA": "0.35"})
    assert cfg.env.alpha == 0.35 and cfg.agent.mode == "a2c_is"
    assert load_config(None, environ={}) == ExperimentConfig()


def test_validate_consistency():
    with pytest.raises(ConfigError, match="gold"):
        parse_config("dataset.name = file\ndataset.path = r.csv\nagent.mode = a2c_is_oracle").validate()
    parse_config("dataset.name = file\ndataset.path = r.csv\nagent.mode = a2c_is").validate()
    with pytest.raises(ConfigError):
        parse_config("agent.mode = ppo").validate()
    with pytest.raises(ConfigError):
        parse_config("dataset.name = mnist").validate()
    with pytest.raises(ConfigError):
        parse_config("env.p_min = 20").validate()


def test_env_config_oracle_follows_mode():
    assert parse_config("agent.mode = a2c_oracle").env_config().oracle
    assert not parse_config("agent.mode = a2c_is").env_config().oracle
    params = parse_config("agent.mode = fixed\nagent.fixed_payment = 4").agent_params()
    assert params == {"payment": 4.0}
