"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import pytest

from perturbop import acceptance


@pytest.mark.parametrize("number", sorted(acceptance.CRITERIA))
def test_criterion(number, capsys):
    result = acceptance.CRITERIA[number]()
    with capsys.disabled():
        print("\n" + result.line())
    assert result.checks_passed, result.details
    assert result.seconds <= result.budget, result.line()
