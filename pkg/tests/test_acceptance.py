"""Release criteria, one test per criterion.

Runs in desk mode by default (10k paths per table, Table-1 tolerance 5%).
Set AMMFEES_ACCEPTANCE=full for the full-scale path counts and tolerances
(100k paths, Table-1 at 2%); the `ammfees verify --full` subcommand runs
the same suite headlessly.
"""

import os

import pytest

from ammfees import acceptance


@pytest.fixture(scope="module")
def ctx():
    mode = "full" if os.environ.get("AMMFEES_ACCEPTANCE", "").lower() == "full" else "desk"
    return acceptance.AcceptanceContext(mode=mode)


def _check(result):
    print(result.line())
    assert result.passed, result.detail


def test_table1_reproduction(ctx):
    _check(acceptance.criterion_table1(ctx))


def test_table2_and_decay_scaling(ctx):
    _check(acceptance.criterion_table2(ctx))


def test_table3_three_players(ctx):
    _check(acceptance.criterion_table3(ctx))


def test_strategy_ordering(ctx):
    _check(acceptance.criterion_strategy_ordering(ctx))


def test_solver_correctness(ctx):
    _check(acceptance.criterion_solver(ctx))


def test_fee_structure(ctx):
    _check(acceptance.criterion_fee_structure(ctx))


def test_figure_trends(ctx):
    _check(acceptance.criterion_figure_trends(ctx))


def test_determinism(ctx):
    _check(acceptance.criterion_determinism(ctx))
