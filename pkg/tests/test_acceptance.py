"""Acceptance battery: one pass/fail line per criterion, each at its stated tolerance.

Run with ``pytest -s tests/test_acceptance.py`` to see the lines as they are
produced; they are also echoed into the terminal summary.
"""

import pytest

from lamicur import acceptance

_LINES = []


@pytest.mark.slow
@pytest.mark.parametrize("criterion", acceptance.CRITERIA, ids=lambda c: f"{c.number}-{c.slug}")
def test_criterion(criterion):
    r = acceptance.run_one(criterion)
    print(r.line())
    _LINES.append(r.line())
    assert r.passed, r.line()


def pytest_terminal_summary_lines():
    return list(_LINES)
