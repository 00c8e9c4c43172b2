import sys

import pytest

from escapedim import conjugacy
from escapedim.polefield import gamma_poles, lattice_exp, lattice_power, log_poles


@pytest.fixture(scope="session")
def lattice31():
    return lattice_power(3.0, 1)


@pytest.fixture(scope="session")
def lattice152():
    return lattice_power(1.5, 2)


@pytest.fixture(scope="session")
def lat_exp():
    return lattice_exp(1)


@pytest.fixture(scope="session")
def logp():
    return log_poles()


@pytest.fixture(scope="session")
def gam():
    return gamma_poles()


@pytest.fixture(scope="session")
def system31(lattice31):
    return conjugacy.build_system(lattice31)


@pytest.fixture(scope="session")
def family31(system31):
    return conjugacy.conjugated_family(system31)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(f"[{'PASS' if results[n] else 'FAIL'}] criterion {n}")
