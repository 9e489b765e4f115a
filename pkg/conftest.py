import os
import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to Python path to ensure imports work
project_root = Path(__file__).parent.absolute()
sys.path.insert(0, str(project_root))

from drat.data.synth import generate_dataset  # noqa: E402
from drat.models.config import ModelConfig  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: full training runs; set DRAT_RUN_SLOW=1 to enable")


def pytest_collection_modifyitems(config, items):
    if os.getenv("DRAT_RUN_SLOW") == "1":
        return
    skip_slow = pytest.mark.skip(reason="set DRAT_RUN_SLOW=1 to run")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_config():
    """A model small enough to train a few steps in a test."""
    return ModelConfig(
        channels=2,
        frames=4,
        height=16,
        width=16,
        joints=3,
        num_classes=2,
        layers=1,
        heads=2,
        kernel=1,
        total_steps=3,
        batch_size=2,
        seed=7,
    )


@pytest.fixture
def tiny_dataset(tmp_path):
    return generate_dataset(
        tmp_path / "data",
        num_classes=2,
        samples_per_class=5,
        frames=4,
        height=16,
        width=16,
        joints=3,
        seed=3,
        threads=2,
    )


@pytest.fixture(autouse=True)
def reset_logging():
    """Handlers installed by a test must not outlive its captured streams."""
    import logging

    from drat.core import logging as drat_logging

    yield
    root = logging.getLogger()
    for handler in list(root.handlers):
        if not type(handler).__module__.startswith("_pytest"):
            root.removeHandler(handler)
    drat_logging._configured = False
