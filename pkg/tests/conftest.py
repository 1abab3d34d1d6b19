import re

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from crtune.device import DeviceParams

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def device():
    return DeviceParams()


@pytest.fixture(scope="session")
def device_xt():
    return DeviceParams(crosstalk=0.05 * np.exp(1j * np.pi / 4))


@pytest.fixture(scope="session")
def group():
    from crtune.benchmarking import clifford_group_2q

    return clifford_group_2q()


def random_hermitian(rng, d, scale=1.0):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return scale * (a + a.conj().T) / 2


def random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


# -- acceptance summary ----------------------------------------------------------

_CRASHED = {}  # criterion number -> phase in which it raised


def pytest_configure(config):
    config._acceptance_lines = []


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if m and report.failed:
        _CRASHED.setdefault(int(m.group(1)), report.when)


def pytest_terminal_summary(terminalreporter, config):
    lines = {n: (ok, detail) for n, ok, detail in config._acceptance_lines}
    for n, when in _CRASHED.items():
        lines.setdefault(n, (False, f"raised during {when} before a result was recorded"))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(lines):
        ok, detail = lines[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
