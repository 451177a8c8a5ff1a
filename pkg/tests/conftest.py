import sys
from pathlib import Path

import pytest

TESTS = Path(__file__).resolve().parent
sys.path.insert(0, str(TESTS))

SCENARIOS = TESTS.parent / "scenarios"
DATA = TESTS / "data"


@pytest.fixture(autouse=True)
def _isolate_seed_env(monkeypatch):
    # A seed exported in the shell must never steer a test run.
    monkeypatch.delenv("PEAR_SEED", raising=False)


@pytest.fixture(scope="session")
def scenarios_dir() -> Path:
    return SCENARIOS


@pytest.fixture(scope="session")
def data_dir() -> Path:
    return DATA
