import sys
from pathlib import Path

import numpy as np
import pytest

import modeseek as ms

sys.path.insert(0, str(Path(__file__).parent))

CONFIG_DIR = Path(ms.__file__).parent / "configs"


@pytest.fixture(scope="session")
def reference():
    return ms.reference_mixture()


@pytest.fixture(scope="session")
def reference_modes(reference):
    return reference.modes


@pytest.fixture(scope="session")
def normal1d():
    return ms.standard_normal(1)


@pytest.fixture(scope="session")
def bimodal():
    return ms.bimodal_1d()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def config_dir():
    return CONFIG_DIR


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is not None and acceptance.RESULTS:
        terminalreporter.section("acceptance")
        for line in acceptance.RESULTS:
            terminalreporter.write_line(line)
