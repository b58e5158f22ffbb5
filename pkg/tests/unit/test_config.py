import logging

import pytest

from src.domain.exceptions import ConfigurationError
from src.engine.config import NavigationConfig, load_config


def test_repository_config_matches_defaults():
    assert load_config() == NavigationConfig()


def test_missing_file_falls_back_to_defaults(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        config = load_config(tmp_path / "absent.yaml")
    assert config == NavigationConfig()
    assert "not found" in caplog.text


def test_yaml_values_and_lambda_alias(tmp_path):
    path = tmp_path / "nav.yaml"
    path.write_text("lambda: 0.5\nd: 16\nheads: 4\niters: 10\n", encoding="utf-8")
    config = load_config(path)
    assert (config.lam, config.d, config.heads, config.iters) == (0.5, 16, 4, 10)


def test_overrides_win_and_none_is_ignored(tmp_path):
    path = tmp_path / "nav.yaml"
    path.write_text("iters: 10\nseed: 3\n", encoding="utf-8")
    config = load_config(path, iters=2, seed=None)
    assert (config.iters, config.seed) == (2, 3)


@pytest.mark.parametrize(
    "text",
    [
        "unknown_key: 1\n",
        "d: 30\nheads: 4\n",
        "delta_b: 1.5\n",
        "- just\n- a list\n",
    ],
)
def test_invalid_files_are_configuration_errors(tmp_path, text):
    path = tmp_path / "nav.yaml"
    path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigurationError):
        load_config(path)


def test_empty_file_gives_defaults(tmp_path):
    path = tmp_path / "nav.yaml"
    path.write_text("", encoding="utf-8")
    assert load_config(path) == NavigationConfig()
