import numpy as np
import pytest

from perron_lab.mesh import DomainDescriptor, build_mesh, unit_square_mesh

ACCEPTANCE = {}


def record(number, title, passed, detail=""):
    """Store one acceptance line; printed in the terminal summary."""
    line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])


@pytest.fixture(scope="session")
def square8():
    return unit_square_mesh(8)


@pytest.fixture(scope="session")
def square16():
    return unit_square_mesh(16)


@pytest.fixture(scope="session")
def disc_mesh():
    return build_mesh(DomainDescriptor.disc(), 0.1)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
