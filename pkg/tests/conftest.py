import pytest

from cchtrim import trim
from cchtrim.core import default_config

_CRITERIA = {}


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, detail = _CRITERIA[n]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")


@pytest.fixture
def criterion():
    """Record a criterion outcome for the summary, print it, then assert it."""
    def record(n, ok, detail):
        _CRITERIA[n] = (bool(ok), detail)
        print(f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, f"criterion {n}: {detail}"
    return record


@pytest.fixture(scope="session")
def cfg():
    return default_config()


@pytest.fixture(scope="session")
def strim_sweep(cfg):
    """STrim over 0..100 m/s in 5 m/s steps, shared by several modules."""
    return trim.sweep("STrim", trim.speed_grid(0, 100, 5), cfg=cfg)


@pytest.fixture(scope="session")
def strim_by_speed(strim_sweep):
    return {s.airspeed: s for s in strim_sweep}


@pytest.fixture(scope="session")
def strim_fine(cfg):
    """STrim continuation sweep at 1 m/s spacing (101 points)."""
    return trim.sweep("STrim", trim.speed_grid(0, 100, 1), cfg=cfg)
