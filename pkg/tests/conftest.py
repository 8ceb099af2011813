import pytest

from tandembound.bounds import TandemScenario

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def mm1():
    """Poisson(0.7) arrivals into unit-rate Poisson servers."""

    def make(hops: int = 1, rho: float = 0.7, mu: float = 1.0) -> TandemScenario:
        return TandemScenario.mm1(mu, rho, hops)

    return make


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
