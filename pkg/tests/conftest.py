import math

import pytest
from hypothesis import HealthCheck, settings
from scipy.constants import c as C_LIGHT

from qfcring.cmt import BandParams, CalibrationTargets, RingParams, calibrate

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

SIGNAL_HZ = C_LIGHT / 917.78e-9
PUMP_HZ = C_LIGHT / 1550e-9
FSR = 573.2e9


def make_ring(loaded_linewidth=1.12e9, q_i=1.6e6):
    signal = BandParams.from_linewidths(SIGNAL_HZ, loaded_linewidth, q_i)
    pump = BandParams(PUMP_HZ, 1.6e6, 1.6e6)
    return RingParams(40e-6, 1.0 / FSR, signal, 1.7, 0.9, pump)


@pytest.fixture(scope="session")
def ring():
    return make_ring()


@pytest.fixture(scope="session")
def couplings(ring):
    return calibrate(ring, CalibrationTargets(0.31, 0.26, 2.0e9))


@pytest.fixture(scope="session")
def preset():
    from qfcring.config import load_config

    return load_config("paper-device")


# one line per acceptance criterion, filled by test_acceptance and printed at the end
ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)
