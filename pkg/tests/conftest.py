import os
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from proxswitch.config import load_scenario

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# acceptance outcomes, filled in by tests/test_acceptance.py
CRITERIA: dict[str, str] = {}


@pytest.fixture(scope="session")
def cfg1():
    return load_scenario(None, 1)


@pytest.fixture(scope="session")
def artifacts() -> Path:
    out = Path(os.environ.get("PROXSWITCH_ARTIFACTS", Path(__file__).resolve().parents[1] / "artifacts"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(CRITERIA, key=lambda k: int(k.split()[1])):
        terminalreporter.write_line(f"{key}: {CRITERIA[key]}")
