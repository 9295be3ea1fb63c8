"""Acceptance criteria; one PASS/FAIL line per criterion.

Run as ``pytest tests/test_acceptance.py`` (lines appear in the terminal
summary) or as ``python tests/test_acceptance.py``.
"""

import pytest

from slitbilliard import acceptance

from conftest import ACCEPTANCE_LINES


@pytest.mark.slow
@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA),
                         ids=[name for _, (name, _) in sorted(acceptance.CRITERIA.items())])
def test_criterion(number):
    res = acceptance.evaluate(number)
    ACCEPTANCE_LINES.append(res.line())
    print(res.line())
    assert res.passed, res.detail


if __name__ == "__main__":
    import sys

    results = acceptance.run(echo=lambda line: print(line, flush=True))
    sys.exit(0 if all(r.passed for r in results) else 1)
