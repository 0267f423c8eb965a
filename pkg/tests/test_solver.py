from __future__ import annotations

import math

import numpy as np
import pytest

from memsample import analytic, solver
from memsample.model import Action, AgeState, ModelParams, is_feasible_under_threshold
from memsample.solver import (
    GridSpec,
    PolicyTable,
    ValueTable,
    discounted_value_iteration,
    extract_threshold,
    relative_value_iteration,
)


def small_grid(n: int = 20) -> GridSpec:
    return GridSpec(n, n)


def threshold_policy(grid: GridSpec, y0: int) -> PolicyTable:
    return PolicyTable.from_rows(grid, lambda x, y: Action.SAMPLE if y - x >= y0 else Action.IDLE)


def table_from(grid: GridSpec, fn) -> ValueTable:
    values = np.full((grid.x_max + 1, grid.y_max + 1), np.nan)
    for x in range(grid.x_max + 1):
        for y in range(max(x, 1), grid.y_max + 1):
            values[x, y] = fn(x, y)
    return ValueTable(grid, values)


# --- grid -------------------------------------------------------------------

@pytest.mark.parametrize("xy", [(0, 5), (6, 5), (-1, 3)])
def test_grid_rejects_bad_caps(xy) -> None:
    with pytest.raises(ValueError):
        GridSpec(*xy)


def test_grid_for_params_covers_threshold() -> None:
    params = ModelParams(0.5, 80.0)
    grid = GridSpec.for_params(params)
    assert grid.y_max >= 8 * 12
    grid.check_covers(params)


def test_grid_check_covers_rejects_small_cap() -> None:
    with pytest.raises(ValueError):
        GridSpec(50, 50).check_covers(ModelParams(0.5, 80.0))


def test_grid_interior_band() -> None:
    grid = GridSpec(100, 200)
    assert (grid.interior_x, grid.interior_y) == (90, 180)


def test_tables_index_only_valid_states() -> None:
    grid = small_grid(5)
    table = table_from(grid, lambda x, y: x + y)
    assert table[2, 3] == 5.0
    with pytest.raises(IndexError):
        table[4, 3]
    with pytest.raises(IndexError):
        table[0, 0]
    policy = threshold_policy(grid, 2)
    assert policy[0, 2] is Action.SAMPLE and policy[0, 1] is Action.IDLE
    assert policy.actions[3, 1] == -1


# --- discounted value iteration ---------------------------------------------------

def test_discounted_fresh_every_slot() -> None:
    # p = 1, c = 0: every state returns to (0, 1)-like ages with cost 1 per slot.
    sol = discounted_value_iteration(ModelParams(1.0, 0.0), GridSpec(64, 64), 0.9, tol=1e-10)
    assert sol.converged
    assert sol.values[0, 1] == pytest.approx(10.0, abs=1e-8)


def test_discounted_rejects_bad_inputs() -> None:
    params = ModelParams(0.5, 5.0)
    with pytest.raises(ValueError):
        discounted_value_iteration(params, GridSpec(64, 64), 1.0)
    with pytest.raises(ValueError):
        discounted_value_iteration(params, GridSpec(64, 64), 0.9, tol=0.0)


def test_discounted_nonconvergence_warns() -> None:
    with pytest.warns(RuntimeWarning):
        sol = discounted_value_iteration(ModelParams(0.5, 5.0), GridSpec(64, 64), 0.99, max_iters=5)
    assert not sol.converged and sol.iterations == 5


def test_value_iterates_increase_from_zero() -> None:
    # Costs are non-negative, so v_0 = 0 <= v_1 and the Bellman operator is monotone.
    params = ModelParams(0.4, 3.0)
    prev = None
    for n, table in zip(range(40), solver.value_iteration_iterates(params, GridSpec(64, 64), 0.95)):
        if prev is not None:
            diff = table.values - prev
            assert np.nanmin(diff) >= -1e-12
        prev = table.values


@pytest.mark.slow
def test_discounted_threshold_near_one() -> None:
    # Large alpha breaks the average-cost tie between 2 and 3 in favour of 3.
    params = ModelParams(0.5, 5.0)
    sol = discounted_value_iteration(params, GridSpec(200, 400), 0.999)
    assert sol.converged
    assert extract_threshold(sol.policy) == 3


# --- relative value iteration ------------------------------------------------------

def test_rvi_tie_case() -> None:
    params = ModelParams(0.5, 5.0)
    result = relative_value_iteration(params, GridSpec.for_params(params))
    assert result.converged
    assert result.g == pytest.approx(4.0, abs=1e-6)
    assert extract_threshold(result.policy) in (2, 3)


def test_rvi_deterministic_fresh() -> None:
    result = relative_value_iteration(ModelParams(1.0, 0.0), GridSpec(64, 64))
    assert result.g == pytest.approx(1.0, abs=1e-12)
    assert extract_threshold(result.policy) == 1


def test_rvi_high_cost() -> None:
    params = ModelParams(0.5, 80.0)
    result = relative_value_iteration(params, GridSpec(400, 800))
    assert result.converged
    assert result.g == pytest.approx(13.2308, abs=1e-4)
    assert extract_threshold(result.policy) == 12


@pytest.mark.parametrize("params", [ModelParams(0.3, 20.0), ModelParams(0.7, 5.0), ModelParams(0.9, 80.0)])
def test_rvi_matches_closed_form(params) -> None:
    report = analytic.optimal_threshold(params)
    result = relative_value_iteration(params, GridSpec.for_params(params))
    assert abs(result.g - report.g_star) <= 1e-6
    assert extract_threshold(result.policy) == report.Y0_star
    prof = analytic.relative_cost_profile(params, report.Y0_star)
    for y in range(1, report.Y0_star + 4):
        for x in range(0, y + 1):
            s = AgeState(x, y)
            if is_feasible_under_threshold(s, report.Y0_star):
                assert result.f[x, y] == pytest.approx(prof[s], abs=1e-5)
    assert all(rep.passed for rep in solver.verify_all(result.f, result.policy))


def test_rvi_reference_is_zero() -> None:
    params = ModelParams(0.5, 20.0)
    result = relative_value_iteration(params, GridSpec.for_params(params))
    assert result.f[0, 1] == 0.0


def test_rvi_nonconvergence_reported() -> None:
    with pytest.warns(RuntimeWarning):
        result = relative_value_iteration(ModelParams(0.5, 80.0), GridSpec(400, 800), max_iters=3)
    assert not result.converged
    assert result.span_at_stop > 1e-9


# --- threshold extraction ----------------------------------------------------------

def test_extract_all_sample_row() -> None:
    grid = small_grid()
    assert extract_threshold(PolicyTable.from_rows(grid, lambda x, y: Action.SAMPLE)) == 1


def test_extract_idle_sample_idle_row() -> None:
    grid = small_grid()
    policy = PolicyTable.from_rows(grid, lambda x, y: Action.SAMPLE if y == 3 else Action.IDLE)
    assert extract_threshold(policy) is None


def test_extract_never_sample() -> None:
    grid = small_grid()
    assert extract_threshold(PolicyTable.from_rows(grid, lambda x, y: Action.IDLE)) is None


def test_extract_ignores_boundary_band() -> None:
    grid = small_grid(20)
    # Row flips back to Idle only at y = 20, which is inside the excluded band.
    policy = PolicyTable.from_rows(grid, lambda x, y: Action.SAMPLE if 4 <= y < 20 else Action.IDLE)
    assert extract_threshold(policy) == 4


# --- structural verifiers on planted defects --------------------------------------------

def concave_values(x: int, y: int) -> float:
    return math.sqrt(y) + 0.1 * x


def test_verifiers_pass_on_clean_tables() -> None:
    grid = small_grid()
    reports = solver.verify_all(table_from(grid, concave_values), threshold_policy(grid, 4))
    assert [r.violations for r in reports] == [0, 0, 0, 0]


def test_monotone_verifier_finds_dip() -> None:
    grid = small_grid()
    table = table_from(grid, lambda x, y: concave_values(x, y) - (1.0 if (x, y) == (2, 6) else 0.0))
    rep = solver.verify_monotone(table)
    assert not rep.passed and rep.violations >= 1 and rep.worst > 0.5


def test_threshold_verifier_finds_flip_back() -> None:
    grid = small_grid()
    policy = PolicyTable.from_rows(
        grid, lambda x, y: Action.IDLE if (x, y) == (0, 8) else (Action.SAMPLE if y - x >= 4 else Action.IDLE))
    rep = solver.verify_threshold_in_y(policy)
    assert (rep.passed, rep.violations) == (False, 1)


def test_concavity_verifier_finds_kink() -> None:
    grid = small_grid()
    table = table_from(grid, lambda x, y: concave_values(x, y) + (0.5 if y >= 10 else 0.0))
    rep = solver.verify_concavity_in_y(table)
    assert not rep.passed
    assert rep.worst == pytest.approx(0.5, abs=0.05)


def test_diagonal_verifier_finds_sample_after_idle() -> None:
    grid = small_grid()
    policy = PolicyTable.from_rows(
        grid, lambda x, y: Action.SAMPLE if (x, y) == (3, 5) else (Action.SAMPLE if y - x >= 4 else Action.IDLE))
    rep = solver.verify_diagonal_idle(policy)
    assert (rep.passed, rep.violations) == (False, 1)


def test_verifiers_skip_boundary_band() -> None:
    grid = small_grid(20)
    table = table_from(grid, lambda x, y: concave_values(x, y) - (5.0 if y == 20 else 0.0))
    assert solver.verify_monotone(table).passed


# --- vanishing discount --------------------------------------------------------------

def test_vanishing_discount_gaps_shrink() -> None:
    params = ModelParams(0.5, 5.0)
    rep = solver.vanishing_discount_check(params, GridSpec.for_params(params), (0.9, 0.99, 0.999))
    assert rep.g == pytest.approx(4.0, abs=1e-6)
    assert rep.strictly_decreasing
    assert rep.gaps[-1] <= 0.05
    # The gap shrinks roughly tenfold per decade of 1 - alpha.
    assert rep.gaps[0] / rep.gaps[1] > 5 and rep.gaps[1] / rep.gaps[2] > 5


def test_vanishing_discount_report_order() -> None:
    rep = solver.VanishingDiscountReport(1.0, (0.9, 0.99), (1.2, 1.3), (0.2, 0.3))
    assert not rep.strictly_decreasing
