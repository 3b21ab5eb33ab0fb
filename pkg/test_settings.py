import json

import pydantic
import pytest

from src.core.settings import DEFAULTS, load_settings


def _write_config(tmp_path, data):
    path = tmp_path / "config.json"
    path.write_text(json.dumps(data))
    return str(path)


def test_config_file_values_over_defaults(tmp_path):
    settings = load_settings(_write_config(tmp_path, {"digit_budget": 50, "trace_cap": 8}), env={})
    assert settings.digit_budget == 50
    assert settings.trace_cap == 8
    assert settings.window_cap == DEFAULTS["window_cap"]


def test_environment_overrides(tmp_path):
    path = _write_config(tmp_path, {"digit_budget": 50})
    settings = load_settings(path, env={"ES_DIGIT_BUDGET": "77", "ES_MAX_WORKERS": "2"})
    assert settings.digit_budget == 77
    assert settings.max_workers == 2
    # values that do not parse are ignored
    assert load_settings(path, env={"ES_DIGIT_BUDGET": "lots"}).digit_budget == 50


def test_missing_or_malformed_files_fall_back_to_defaults(tmp_path):
    assert load_settings(str(tmp_path / "absent.json"), env={}).digit_budget == DEFAULTS["digit_budget"]
    assert load_settings(_write_config(tmp_path, [1, 2]), env={}).trace_cap == DEFAULTS["trace_cap"]
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert load_settings(str(broken), env={}).probe_horizon == DEFAULTS["probe_horizon"]


def test_config_path_from_environment(tmp_path):
    path = _write_config(tmp_path, {"probe_horizon": 12})
    assert load_settings(env={"ES_CONFIG_PATH": path}).probe_horizon == 12


def test_settings_are_validated_and_frozen(tmp_path):
    with pytest.raises(pydantic.ValidationError):
        load_settings(_write_config(tmp_path, {"digit_budget": 0}), env={})
    settings = load_settings(str(tmp_path / "absent.json"), env={})
    with pytest.raises(pydantic.ValidationError):
        settings.digit_budget = 5
