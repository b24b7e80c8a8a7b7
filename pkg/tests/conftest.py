import pytest

import builders
from builders import Built, make  # noqa: F401


@pytest.fixture(scope="session")
def box():
    return builders.box()


@pytest.fixture(scope="session")
def plug():
    return builders.plug()


@pytest.fixture(scope="session")
def slot_plate():
    return builders.slot_plate()


@pytest.fixture(scope="session")
def cylinder():
    return builders.cylinder()


@pytest.fixture(scope="session")
def cubes():
    return builders.cubes()


@pytest.fixture(scope="session")
def bar():
    return builders.bar()


class AcceptanceLog:
    def __init__(self):
        self.lines = {}

    def record(self, number, title, ok, detail=""):
        status = "PASS" if ok else "FAIL"
        self.lines[number] = f"[{status}] criterion {number:>2}: {title} - {detail}"


@pytest.fixture(scope="session")
def acceptance(pytestconfig):
    log = AcceptanceLog()
    pytestconfig._acceptance_log = log
    return log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = getattr(config, "_acceptance_log", None)
    if log is None or not log.lines:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(log.lines):
        terminalreporter.write_line(log.lines[n])
