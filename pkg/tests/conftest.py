import pytest
from hypothesis import HealthCheck, settings

from ncjt.config import SystemConfig

settings.register_profile(
    "ncjt", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("ncjt")


@pytest.fixture
def cfg():
    """Default geometry: lambda = 1, r0 = 0.04, alpha = 3.67."""
    return SystemConfig.preset(alpha=3.67)


# one line per acceptance criterion, printed at the end of every run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
