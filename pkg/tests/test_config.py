import json
from fractions import Fraction

import pytest

from clark_tool.certreal import DEFAULT_BITS, CertReal
from clark_tool.config import RunConfig, build_config, load_config_file
from clark_tool.construct import Schedule
from clark_tool.diskop import DEFAULT_TOLERANCES
from clark_tool.errors import ConfigError


@pytest.fixture
def config_file(tmp_path):
    def write(data):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(data), encoding="utf-8")
        return str(path)

    return write


def test_defaults():
    config = build_config()
    assert config.stages == 1
    assert config.bits == DEFAULT_BITS
    assert config.schedule == Schedule()
    assert config.tolerances == DEFAULT_TOLERANCES
    base = config.base_params
    assert base.t1 == CertReal("2^-1")
    assert base.c1 == CertReal("2^-3")


def test_file_then_flags(config_file):
    path = config_file(
        {
            "stages": 3,
            "precision": {"bits": 512},
            "schedule": "custom:1,1,2",
            "base": {"c1": "1/16"},
            "tolerances": {"eigenvalue": 1e-6},
        }
    )
    config = build_config(path, {"stages": 2, "base": {"t1": None, "mu1": "0.125"}})
    assert config.stages == 2
    assert config.bits == 512
    assert config.schedule.values == (1, 1, 2)
    assert config.base == (Fraction(1, 2), "0.125", "1/16")
    assert config.tolerances["eigenvalue"] == 1e-6
    assert config.tolerances["residual"] == DEFAULT_TOLERANCES["residual"]


def test_none_overrides_are_ignored():
    config = build_config(overrides={"stages": None, "precision": {"bits": None}})
    assert config == build_config()


def test_unknown_keys(config_file):
    with pytest.raises(ConfigError, match="Unknown keys"):
        build_config(config_file({"stagez": 2}))


def test_unknown_tolerance(config_file):
    with pytest.raises(ConfigError, match="Unknown tolerance"):
        build_config(config_file({"tolerances": {"angle": 1e-3}}))


@pytest.mark.parametrize("stages", [0, -2, "3"])
def test_stages_must_be_positive_int(stages):
    with pytest.raises(ConfigError, match="stages"):
        build_config(overrides={"stages": stages})


def test_base_cap_violation():
    with pytest.raises(ConfigError, match="Base stage violates t1 \\+ c1\\*mu1 < 1"):
        build_config(overrides={"base": {"t1": "0.9", "mu1": "0.25", "c1": "0.4999"}})


def test_unparsable_base():
    with pytest.raises(ConfigError, match="Invalid base parameter"):
        build_config(overrides={"base": {"t1": "half"}})


def test_schedule_too_short_for_stages():
    with pytest.raises(ConfigError, match="only up to stage 3"):
        build_config(overrides={"stages": 4, "schedule": "1,1"})


def test_precision_ceiling_below_bits():
    with pytest.raises(ConfigError):
        build_config(overrides={"precision": {"bits": 1024, "max_bits": 512}})


def test_config_file_not_found(tmp_path):
    with pytest.raises(ConfigError, match="Config file not found"):
        load_config_file(str(tmp_path / "missing.json"))


def test_config_file_must_hold_an_object(tmp_path):
    path = tmp_path / "list.json"
    path.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ConfigError, match="JSON object"):
        load_config_file(str(path))


def test_to_dict_layers_back(config_file):
    config = build_config(overrides={"stages": 2, "precision": {"bits": 320}})
    again = build_config(config_file(config.to_dict()))
    assert again.stages == 2
    assert again.bits == 320
    assert again.to_dict() == config.to_dict()


def test_iteration_cap_validation():
    with pytest.raises(ConfigError, match="iteration_cap"):
        RunConfig(iteration_cap=0).validate()
