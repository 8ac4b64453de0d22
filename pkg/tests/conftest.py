import os

import pytest

# criterion number -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE = {}


def record(number, passed, detail=""):
    ACCEPTANCE[number] = (bool(passed), detail)
    return bool(passed)


@pytest.fixture(scope="session")
def matrix():
    """The 48 event x control runs at the default settings (seed 0, 1000 devices per class)."""
    from tclfreq.scenario import run_matrix
    outs = run_matrix(workers=os.cpu_count() or 1)
    return {o.key: o for o in outs}


@pytest.fixture(scope="session")
def sweep():
    from tclfreq.scenario import run_penetration_sweep
    points, _ = run_penetration_sweep(workers=os.cpu_count() or 1)
    return points


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        tr.write_line(f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
