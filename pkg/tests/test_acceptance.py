"""Acceptance criteria 1-12 at their stated tolerances.

Each test prints one ``criterion NN PASS/FAIL`` line plus its individual
checks (run with ``-s`` to see them live); the criterion lines are repeated
in the terminal summary.
Deselect with ``-m "not acceptance"`` for a quick run.
"""

import pytest

from sle_lab.acceptance import CRITERIA, run_criterion

pytestmark = pytest.mark.acceptance


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, acceptance_lines):
    res = run_criterion(number)
    acceptance_lines.append(res.line())
    print()
    print(res.line())
    for c in res.checks:
        print(f"    {'ok  ' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    assert res.passed, "\n".join(f"{c.name}: {c.detail}" for c in res.checks if not c.passed)
