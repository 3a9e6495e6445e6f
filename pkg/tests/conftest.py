import numpy as np
import pytest

from drcc_ots.case import build_operators, bundled_case
from drcc_ots.uncertainty import placement_matrix

_criteria: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion exercised by the test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    n = dict(report.user_properties).get("criterion")
    if n is None:
        return
    entry = _criteria.setdefault(n, {"passed": True, "details": []})
    entry["passed"] &= report.outcome == "passed"
    detail = dict(report.user_properties).get("detail")
    if detail:
        entry["details"].append(detail)


def pytest_runtest_setup(item):
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        item.user_properties.append(("criterion", marker.args[0]))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        entry = _criteria[n]
        status = "PASS" if entry["passed"] else "FAIL"
        tail = "; ".join(entry["details"])
        terminalreporter.write_line(f"criterion {n:>2}: {status}" + (f"  ({tail})" if tail else ""))


@pytest.fixture
def detail(request):
    """Attach a one-line summary to the acceptance printout."""

    def record(text):
        request.node.user_properties.append(("detail", text))

    return record


@pytest.fixture(scope="session")
def case3():
    return bundled_case("case3")


@pytest.fixture(scope="session")
def case14():
    return bundled_case("case14")


@pytest.fixture(scope="session")
def ops3(case3):
    return build_operators(case3)


@pytest.fixture(scope="session")
def ops14(case14):
    return build_operators(case14)


@pytest.fixture(scope="session")
def F3(case3):
    return placement_matrix(case3, [3])


@pytest.fixture(scope="session")
def F14(case14):
    return placement_matrix(case14, [3, 6, 13])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
