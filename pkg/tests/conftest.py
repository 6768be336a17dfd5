import numpy as np
import pytest

from stripelab.geometry import DomainDistance, TubularDomain, circle_curve


@pytest.fixture(scope="session")
def annulus():
    return TubularDomain(circle_curve(1.0, 2000), 0.25)


@pytest.fixture(scope="session")
def annulus_dd(annulus):
    return DomainDistance(annulus, "inner")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_CRITERIA = []


@pytest.fixture(scope="session")
def criterion_log():
    return _CRITERIA


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n, ok, detail in sorted(_CRITERIA):
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
