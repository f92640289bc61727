import os

import pytest
from hypothesis import HealthCheck, settings

from combmem import presets

settings.register_profile("default", deadline=None, max_examples=30,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def chip():
    return presets.chip_device()


@pytest.fixture(scope="session")
def chip_single_photon():
    return presets.chip_device(presets.DECAY_SINGLE_PHOTON)


@pytest.fixture(scope="session")
def design():
    return presets.design_device()


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
