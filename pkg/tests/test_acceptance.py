"""The eleven acceptance criteria, each run at its stated tolerance and time budget."""

import pytest

from credfilter.validation import ACCEPTANCE, SANITY, run_check

SEED = 20240601


@pytest.mark.slow
@pytest.mark.parametrize("check", ACCEPTANCE, ids=[c.key for c in ACCEPTANCE])
def test_acceptance(check, capsys):
    result = run_check(check, SEED)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()


@pytest.mark.parametrize("check", SANITY, ids=[c.key for c in SANITY])
def test_sanity(check):
    result = run_check(check, SEED)
    assert result.passed, result.line()
