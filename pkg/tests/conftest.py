from pathlib import Path

import pytest

from gridshare.dataset import assign_battery_capacity, load_clients

DATA = Path(__file__).parent / "data"
GOLDEN = DATA / "golden_3x48.csv"
GOLDEN_SEED = 7
GOLDEN_BALANCE = 0.5


@pytest.fixture(scope="session")
def golden_clients():
    return load_clients(GOLDEN)


@pytest.fixture(scope="session")
def golden_capacities(golden_clients):
    return {c.client_id: assign_battery_capacity(c, GOLDEN_SEED) for c in golden_clients}


# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
