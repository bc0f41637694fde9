"""Exit-criteria battery at the stated sizes; one pass/fail line per criterion."""

import pytest

from replay_td.verification import run_criterion

# stated wall-clock budgets in seconds (criteria without one get a generous cap)
BUDGET = {1: 60, 2: 60, 3: 30, 4: 30, 5: 60, 6: 60, 7: 120, 8: 180, 9: 300, 10: 300, 11: 60, 12: 300}


@pytest.mark.acceptance
@pytest.mark.parametrize("number", sorted(BUDGET))
def test_criterion(number, capsys):
    rep, secs = run_criterion(number, "full")
    verdict = "PASS" if rep.passed else "FAIL"
    with capsys.disabled():
        print(f"\n[criterion {number:2d}] {verdict} {rep.title} ({secs:.1f}s)")
        for c in rep.checks:
            print(f"    {'ok ' if c.passed else 'BAD'} {c.describe()}")
    assert rep.passed, "; ".join(c.describe() for c in rep.failures)
    assert secs <= BUDGET[number], f"criterion {number} took {secs:.1f}s, budget {BUDGET[number]}s"
