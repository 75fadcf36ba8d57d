import pytest
from hypothesis import settings

from privcast.graph import generate_k_growing

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")


@pytest.fixture(scope="session")
def g2000():
    return generate_k_growing(2000, 6, 1)


_CRITERIA = {}


@pytest.fixture
def criterion():
    """Record one acceptance verdict; call as ``criterion(number, passed, detail)``."""
    def record(number, passed, detail):
        _CRITERIA[number] = (bool(passed), detail)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        passed, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
