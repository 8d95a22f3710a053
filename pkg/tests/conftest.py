import numpy as np
import pytest

from lattice_kpz import ModelParameters, SeedSpec


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def linear_params():
    return ModelParameters(lambda0=0.0, nu0=0.5, d0=0.5, ring_size=64)


@pytest.fixture
def seed():
    return SeedSpec(7)


ACCEPTANCE = {}


@pytest.fixture(scope="session")
def acceptance():
    """Criterion number -> (passed, detail); printed as one line each after the run."""
    return ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
