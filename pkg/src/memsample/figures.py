"""Tabular data behind the cost-versus-threshold and cost-versus-p plots."""

from __future__ import annotations

import math
from typing import Sequence

from . import analytic
from .model import ModelParams

FIGURES = ("fig2", "fig3", "fig4")
DEFAULT_P_GRID = tuple(round(0.05 * k, 2) for k in range(1, 20))
DEFAULT_C_VALUES = (20.0, 40.0, 80.0)

FIG2_COLUMNS = ("Y0", "g0", "marker")
FIG3_COLUMNS = ("c", "p", "Y0_star")
FIG4_COLUMNS = ("c", "p", "g_star", "lower_bound")


def fig2_rows(p: float = 0.5, c: float = 80.0, y0_max: int = 40) -> list[dict]:
    """``g0`` over thresholds ``1..y0_max`` plus one row each for the integer and real minimizers."""
    params = ModelParams(p, c)
    rows = [{"Y0": y0, "g0": analytic.g0(y0, params), "marker": ""} for y0 in range(1, y0_max + 1)]
    report = analytic.optimal_threshold(params)
    rows.append({"Y0": report.Y0_star, "g0": report.g_star, "marker": "optimal"})
    if report.Y0_tilde > 0.0:
        rows.append({"Y0": report.Y0_tilde, "g0": analytic.g0_relaxed(report.Y0_tilde, params),
                     "marker": "relaxed"})
    return rows


def fig3_rows(p_grid: Sequence[float] = DEFAULT_P_GRID, c_values: Sequence[float] = DEFAULT_C_VALUES) -> list[dict]:
    return [{"c": c, "p": p, "Y0_star": analytic.optimal_threshold(ModelParams(p, c)).Y0_star}
            for c in c_values for p in p_grid]


def fig4_rows(p_grid: Sequence[float] = DEFAULT_P_GRID, c_values: Sequence[float] = DEFAULT_C_VALUES) -> list[dict]:
    rows = []
    for c in c_values:
        for p in p_grid:
            params = ModelParams(p, c)
            rows.append({"c": c, "p": p, "g_star": analytic.optimal_threshold(params).g_star,
                         "lower_bound": analytic.lower_bound(params)})
    return rows


def _by_c(rows: list[dict]) -> dict[float, list[dict]]:
    groups: dict[float, list[dict]] = {}
    for row in rows:
        groups.setdefault(row["c"], []).append(row)
    return {c: sorted(g, key=lambda r: r["p"]) for c, g in groups.items()}


def check_fig2(rows: list[dict], expected_argmin: int | None = None) -> list[str]:
    """Problems with a fig2 table; empty when it is consistent."""
    curve = [r for r in rows if not r["marker"]]
    best = min(curve, key=lambda r: r["g0"])
    optimal = [r for r in rows if r["marker"] == "optimal"]
    problems = []
    if optimal and optimal[0]["Y0"] != best["Y0"] and not math.isclose(optimal[0]["g0"], best["g0"], rel_tol=1e-12):
        problems.append(f"fig2: curve minimum at Y0={best['Y0']} but optimal marker at Y0={optimal[0]['Y0']}")
    if expected_argmin is not None and best["Y0"] != expected_argmin:
        problems.append(f"fig2: curve minimum at Y0={best['Y0']}, expected {expected_argmin}")
    return problems


def check_fig3(rows: list[dict]) -> list[str]:
    problems = []
    for c, group in _by_c(rows).items():
        for a, b in zip(group, group[1:]):
            if b["Y0_star"] < a["Y0_star"]:
                problems.append(f"fig3: Y0_star drops from {a['Y0_star']} to {b['Y0_star']} "
                                f"between p={a['p']} and p={b['p']} at c={c}")
    return problems


def check_fig4(rows: list[dict]) -> list[str]:
    problems = []
    for c, group in _by_c(rows).items():
        for a, b in zip(group, group[1:]):
            if b["g_star"] > a["g_star"]:
                problems.append(f"fig4: g_star rises between p={a['p']} and p={b['p']} at c={c}")
        for r in group:
            if r["lower_bound"] > r["g_star"]:
                problems.append(f"fig4: lower bound above g_star at p={r['p']}, c={c}")
    return problems
