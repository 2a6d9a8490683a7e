import os
import re
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_CRITERION_DOCS = {}


def pytest_collection_modifyitems(items):
    for item in items:
        name = item.name.split("[")[0]
        m = re.match(r"test_criterion_(\d+)_", name)
        if m and "test_acceptance" in item.nodeid:
            doc = (item.function.__doc__ or "").strip().splitlines()
            _CRITERION_DOCS[item.nodeid] = (int(m.group(1)), doc[0] if doc else "")


@pytest.hookimpl(trylast=True)
def pytest_runtest_logreport(report):
    # one visible pass/fail line per acceptance criterion
    if report.when != "call" or report.nodeid not in _CRITERION_DOCS:
        return
    num, desc = _CRITERION_DOCS[report.nodeid]
    status = "PASS" if report.passed else "FAIL"
    print(f"\n[criterion {num}] {status}: {desc}")
