import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from evolve.devices import bundled_machine, bundled_pair  # noqa: E402
from evolve.evolution import gate_for_runtime  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def bulb_o():
    return bundled_machine("lightbulb", "original")


@pytest.fixture
def bulb_n():
    return bundled_machine("lightbulb", "evolved")


@pytest.fixture
def robot_o():
    return bundled_machine("robot", "original")


@pytest.fixture
def robot_n():
    return bundled_machine("robot", "evolved")


@pytest.fixture
def bulb_pair():
    return gate_for_runtime(bundled_pair("lightbulb"))


@pytest.fixture
def robot_pair():
    return gate_for_runtime(bundled_pair("robot"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def record():
    """Log one acceptance line; the assertion follows in the test."""

    def log(name: str, ok: bool, detail: str = ""):
        ACCEPTANCE_LINES.append(f"{name}: {'PASS' if ok else 'FAIL'}" + (f"  {detail}" if detail else ""))
        return ok

    return log
