import numpy as np
import pytest

from psidkit.lssm import StochasticModel


def scalar_model(a=0.5, cy=1.0, cz=2.0, q=1.0, r=1.0, s=0.0, rz=1.0):
    return StochasticModel(
        A=[[a]], Cy=[[cy]], Cz=[[cz]], Q=[[q]], R=[[r]], S=[[s]], Rz=[[rz]], Sxz=[[0.0]],
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
