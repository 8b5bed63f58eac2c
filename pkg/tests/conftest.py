import numpy as np
import pytest

from bayesjoinpoint.model import SeriesData

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def report_criterion(request):
    """Record one acceptance line; printed again in the terminal summary."""
    lines = request.config.stash[_LINES]

    def record(number, passed, detail, verdict=None):
        verdict = verdict or ("PASS" if passed else "FAIL")
        line = f"criterion {number}: {verdict} - {detail}"
        lines.append(line)
        print(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def small_series():
    """Ten yearly counts with a bend near the middle."""
    t = np.arange(2000.0, 2010.0)
    y = np.array([30, 33, 37, 41, 44, 42, 39, 36, 33, 31], dtype=float)
    return SeriesData.from_arrays(t, y, np.full(10, 1e5))


@pytest.fixture
def break_series():
    """28 years around 285,000 person-years with one strong break."""
    from bayesjoinpoint.simstudy import default_scenarios, generate_series

    single = [s for s in default_scenarios() if s.name == "single"][0]
    return generate_series(single, 12345)
