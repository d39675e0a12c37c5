import logging
import os
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from streamsat import config as config_module
from streamsat.generators import load_generator_spec

SPECS = ROOT / "specs"


def pytest_collection_modifyitems(config, items):
    if os.getenv("STREAMSAT_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set STREAMSAT_SLOW=1 to run slow experiments")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(autouse=True)
def _test_env(monkeypatch):
    for name in list(os.environ):
        if name.startswith("STREAMSAT_") and name != "STREAMSAT_SLOW":
            monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("STREAMSAT_BACKEND", "thread")
    config_module.reset_settings()
    yield
    config_module.reset_settings()
    package_logger = logging.getLogger("streamsat")
    for handler in list(package_logger.handlers):
        package_logger.removeHandler(handler)
    package_logger.setLevel(logging.NOTSET)
    logging.getLogger("streamsat.solver").setLevel(logging.NOTSET)


@pytest.fixture
def a51_reduced():
    return load_generator_spec(SPECS / "a51_reduced.json")


@pytest.fixture
def threshold_toy():
    return load_generator_spec(SPECS / "threshold_toy.json")


@pytest.fixture
def summation_toy():
    return load_generator_spec(SPECS / "summation_toy.json")
