"""Shared fixtures and the acceptance summary printed after every run."""

from collections import defaultdict

import numpy as np
import pytest

_OUTCOMES = defaultdict(list)
_TITLES = {}


def pytest_collection_modifyitems(items):
    for item in items:
        marker = item.get_closest_marker("acceptance")
        if marker is not None:
            criterion = marker.kwargs["criterion"]
            _TITLES[criterion] = marker.kwargs.get("title", "")
            item.user_properties.append(("acceptance_criterion", criterion))


def pytest_runtest_logreport(report):
    criterion = dict(report.user_properties).get("acceptance_criterion")
    if criterion is None:
        return
    if report.when == "call" or not report.passed:
        _OUTCOMES[criterion].append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _TITLES:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(_TITLES):
        outcomes = _OUTCOMES.get(criterion, [])
        if not outcomes:
            verdict = "NOT RUN"
        elif "failed" in outcomes:
            verdict = "FAIL"
        elif all(o == "passed" for o in outcomes):
            verdict = "PASS"
        else:
            verdict = "SKIP"
        terminalreporter.write_line(f"criterion {criterion}: {verdict:<7} {_TITLES[criterion]}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
