import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("sail", deadline=None, max_examples=40)
settings.load_profile("sail")

_CRITERIA: dict[int, str] = {}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def report(capsys):
    """``report(n, ok, detail)`` prints one pass/fail line for acceptance criterion ``n``."""

    def _report(n, ok, detail=""):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _CRITERIA[n] = line
        with capsys.disabled():
            print("\n" + line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[n])
