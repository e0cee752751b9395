"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Run with `pytest -s tests/test_acceptance.py` to see the lines; criterion 14
(the N-convergence study) takes about 16 minutes on one core.
"""
import pytest

from meanfield.acceptance import CHECKS, SUPPLEMENTARY, run_check


@pytest.mark.parametrize("criterion", sorted(CHECKS))
def test_criterion(criterion):
    res = run_check(criterion)
    print(res.line())
    assert res.passed, res.line()


@pytest.mark.parametrize("name", sorted(SUPPLEMENTARY))
def test_supplementary_probe(name):
    res = run_check(name)
    print(res.line())
    assert res.passed, res.line()
