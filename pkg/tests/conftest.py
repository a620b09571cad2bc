import math

import pytest

from hopfdelay.config import build_problem

PI = math.pi
DISK = {"kind": "disk", "center": [PI, PI], "radius": PI}
DISK_COEFFS = {"d": "1 + 0.1*x + 0.1*y", "b": ["cos(x)/(sin(x)+2)", "cos(y)/(sin(y)+2)"]}

# (criterion, passed, detail) rows collected by the acceptance suite
ACCEPTANCE_LOG = []


def interval_doc(kind="hutchinson", n=199, d=1.0, b=0.0, params=None, **extra):
    doc = {"domain": {"kind": "interval", "a": 0.0, "b": PI}, "grid": {"n": n},
           "coefficients": {"d": d, "b": [b]}, "model": {"kind": kind, "params": params or {}}}
    doc.update(extra)
    return doc


def disk_doc(kind, n=64, params=None, **extra):
    doc = {"domain": dict(DISK), "grid": {"nx": n, "ny": n}, "coefficients": dict(DISK_COEFFS),
           "model": {"kind": kind, "params": params or {}}}
    doc.update(extra)
    return doc


def problem_1d(kind="hutchinson", n=199, **kw):
    return build_problem(interval_doc(kind, n, **kw))


@pytest.fixture(scope="session")
def hutch():
    return problem_1d("hutchinson", 199)


@pytest.fixture(scope="session")
def record():
    def _record(criterion, ok, detail):
        ACCEPTANCE_LOG.append((criterion, bool(ok), detail))
        print(f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok
    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LOG:
        return
    terminalreporter.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE_LOG, key=lambda r: r[0]):
        terminalreporter.write_line(f"criterion {crit:>2}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def hutch_hopf(hutch):
    from hopfdelay import pipeline
    return pipeline.hopf(hutch, 1.1)
