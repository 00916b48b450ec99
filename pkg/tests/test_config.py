"""
Test configuration parsing and validation
"""
import pytest

from config import Config
from errors import InvalidInputError


def test_default_schedule():
    assert Config.schedule() == (1e-1, 1e-2, 1e-3, 1e-4)


def test_parse_schedule_ignores_blank_items():
    assert Config.parse_schedule("0.5, 0.05,") == (0.5, 0.05)


@pytest.mark.parametrize("text", ["", "0.1,0.1", "0.01,0.1", "1.0,0.1", "0.1,abc", "0,0.1"])
def test_parse_schedule_rejects(text):
    with pytest.raises(InvalidInputError):
        Config.parse_schedule(text)


def test_defaults_are_valid():
    assert Config.validate()


@pytest.mark.parametrize("name, value", [("TOL", 0.0), ("MAX_ITER", 0), ("PAD", -1), ("N_JOBS", 0), ("MIN_P", 1.0)])
def test_validate_catches_bad_settings(monkeypatch, name, value):
    monkeypatch.setattr(Config, name, value)
    assert not Config.validate()


def test_validate_catches_bad_schedule(monkeypatch):
    monkeypatch.setattr(Config, "SCHEDULE_TEXT", "0.2,0.5")
    assert not Config.validate()
