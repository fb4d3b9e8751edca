import re

import numpy as np
import pytest

from ftdla import explorer, tiny

_CRITERIA = {}


@pytest.fixture(scope="session")
def ctx():
    return explorer.Context.tiny()


@pytest.fixture(scope="session")
def float_model():
    return tiny.float_model()


@pytest.fixture(scope="session")
def qmodel0(ctx):
    return ctx.model(0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_runtest_logreport(report):
    m = re.search(r"test_criterion_(\d+)", report.nodeid)
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA[n] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        word = {"passed": "PASS", "failed": "FAIL"}.get(_CRITERIA[n], _CRITERIA[n].upper())
        terminalreporter.write_line(f"criterion {n:2d}: {word}")
