import os

import pytest

SCENARIOS = os.path.join(os.path.dirname(__file__), "..", "scenarios")


@pytest.fixture
def scenario_path():
    def _path(name: str) -> str:
        return os.path.join(SCENARIOS, name)

    return _path


@pytest.fixture
def scenario_text(scenario_path):
    def _text(name: str) -> str:
        with open(scenario_path(name), "r", encoding="utf-8") as fh:
            return fh.read()

    return _text
