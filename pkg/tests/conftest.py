import numpy as np
import pytest

from hlsid.basis import BasisFamily, reference_model

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def ref_model():
    return reference_model()


@pytest.fixture(scope="session")
def erlang_bases():
    return {P: BasisFamily.erlang(5.0, P) for P in range(1, 6)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
