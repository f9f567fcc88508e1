import pytest

from circletrails.cf import parse_cf
from circletrails.dynamics import tune_parameter
from circletrails.lifts import make_arnold


@pytest.fixture(scope="session")
def arnold_golden():
    """Critical Arnold map with rotation number golden to 1e-12."""
    res = tune_parameter(lambda t: make_arnold(t, 1.0), parse_cf("golden"), 1e-12, 0.0, 1.0)
    return make_arnold(res.param, 1.0)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not mod.REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.REPORT:
        terminalreporter.write_line(line)
