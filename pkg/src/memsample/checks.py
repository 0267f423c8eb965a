"""Cross-checks between the closed forms, the DP solver and the simulator."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

from . import analytic, figures, simulator, solver
from .model import AgeState, ModelParams, is_feasible_under_threshold

DEFAULT_P_GRID = (0.1, 0.3, 0.5, 0.7, 0.9)
DEFAULT_C_GRID = (0.0, 1.0, 5.0, 20.0, 80.0)
SIM_POINTS = ((0.5, 5.0), (0.5, 80.0), (0.8, 20.0))
FIRST_PASSAGE_POINTS = ((0.5, 0.0), (0.5, 2.0), (0.8, 5.0))

G_TOL = 1e-3
F_TOL = 1e-3
IDENTITY_TOL = 1e-12
LOWER_BOUND_TOL = 1e-9
CI_MULTIPLE = 3.0


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def _grid(p_grid, c_grid):
    return [ModelParams(p, c) for p in p_grid for c in c_grid]


def accepted_thresholds(report: analytic.ClosedFormReport) -> set[int]:
    return {report.Y0_star, report.Y0_star + 1} if report.tie else {report.Y0_star}


def check_special_cases(p_grid: Sequence[float]) -> CheckResult:
    worst = 0.0
    for p in p_grid:
        for c in DEFAULT_C_GRID:
            params = ModelParams(p, c)
            worst = max(worst,
                        abs(analytic.g0(1, params) - (1.0 / p + c * p)),
                        abs(analytic.g0(2, params) - (1.0 / p + (c + 1.0) * p / (1.0 + p))))
    return CheckResult("g0 special cases Y0=1,2", worst <= IDENTITY_TOL, f"max error {worst:.2e}")


def check_argmin(p_grid, c_grid, upper: int = 10_000) -> CheckResult:
    bad = []
    for params in _grid(p_grid, c_grid):
        report = analytic.optimal_threshold(params)
        y0, g = analytic.brute_force_threshold(params, upper)
        if y0 not in accepted_thresholds(report) or not math.isclose(g, report.g_star, rel_tol=1e-12):
            bad.append(f"(p={params.p}, c={params.c}): brute force {y0}, closed form {report.Y0_star}")
    return CheckResult("optimal threshold = brute-force argmin", not bad, "; ".join(bad[:3]))


def check_unimodality(p_grid, c_grid, y0_max: int = 200) -> CheckResult:
    bad = []
    for params in _grid(p_grid, c_grid):
        for y0 in range(1, y0_max + 1):
            step = analytic.g0(y0, params) - analytic.g0(y0 + 1, params)
            q = analytic.threshold_quadratic(y0, params)
            scale = max(1.0, abs(analytic.g0(y0, params)))
            if abs(step) <= 1e-12 * scale:
                continue
            if (step > 0) != (q < 0):
                bad.append(f"(p={params.p}, c={params.c}, Y0={y0})")
    return CheckResult("g0 decreases then increases with sign of Q", not bad, "; ".join(bad[:3]))


def check_lower_bound(p_grid, c_grid) -> CheckResult:
    bad = []
    worst_identity = 0.0
    for params in _grid(p_grid, c_grid):
        report = analytic.optimal_threshold(params)
        if report.lower_bound > report.g_star:
            bad.append(f"bound above g* at (p={params.p}, c={params.c})")
        if report.Y0_tilde > 0.0:
            gap = abs(analytic.g0_relaxed(report.Y0_tilde, params) - report.lower_bound)
            worst_identity = max(worst_identity, gap)
    if worst_identity > LOWER_BOUND_TOL:
        bad.append(f"bound differs from g0 at the real minimizer by {worst_identity:.2e}")
    return CheckResult("lower bound <= g* and attained at real minimizer", not bad, "; ".join(bad[:3]))


def check_first_passage_bound(p_grid, c_grid, y_max: int = 100) -> CheckResult:
    bad = 0
    for params in _grid(p_grid, c_grid):
        for y in range(1, y_max + 1):
            for x in range(0, y + 1):
                s = AgeState(x, y)
                if analytic.first_passage_exact(s, params) > analytic.first_passage_bound(s, params):
                    bad += 1
    return CheckResult("first-passage cost <= bound", bad == 0, f"{bad} violations")


def solve_point(params: ModelParams) -> list[CheckResult]:
    """RVI at ``params`` checked against the closed forms and the structural properties."""
    tag = f"(p={params.p}, c={params.c})"
    report = analytic.optimal_threshold(params)
    result = solver.relative_value_iteration(params, solver.GridSpec.for_params(params))
    out = [CheckResult(f"RVI converged {tag}", result.converged, f"span {result.span_at_stop:.2e}")]
    gap = abs(result.g - report.g_star)
    out.append(CheckResult(f"RVI g = g0(Y0*) {tag}", gap <= G_TOL, f"|diff| {gap:.2e}"))
    threshold = solver.extract_threshold(result.policy)
    out.append(CheckResult(f"RVI threshold = Y0* {tag}", threshold in accepted_thresholds(report),
                           f"RVI {threshold}, closed form {report.Y0_star}"))
    for rep in solver.verify_all(result.f, result.policy):
        out.append(CheckResult(f"{rep.name} {tag}", rep.passed,
                               f"{rep.violations} of {rep.checked}, worst {rep.worst:.2e}"))
    if report.Y0_star > 1:
        profile = analytic.relative_cost_profile(params, report.Y0_star)
        worst = 0.0
        for y in range(1, report.Y0_star + 4):
            for x in range(0, y + 1):
                s = AgeState(x, y)
                if is_feasible_under_threshold(s, report.Y0_star):
                    worst = max(worst, abs(result.f[x, y] - profile[s]))
        out.append(CheckResult(f"RVI f = closed-form f {tag}", worst <= F_TOL, f"max |diff| {worst:.2e}"))
    return out


def check_solver_sweep(p_grid, c_grid, jobs: int = 1) -> list[CheckResult]:
    points = _grid(p_grid, c_grid)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            per_point = list(pool.map(solve_point, points))
    else:
        per_point = [solve_point(params) for params in points]
    return [r for rs in per_point for r in rs]


def check_simulation(points=SIM_POINTS, slots: int = 1_000_000, warmup: int = 10_000,
                     seed: int = 20240601, jobs: int = 1) -> list[CheckResult]:
    params_list = [ModelParams(p, c) for p, c in points]
    config = simulator.SimConfig(slots, warmup, seed)
    estimates = simulator.sweep_simulate(
        params_list, lambda prm: simulator.Threshold(analytic.optimal_threshold(prm).Y0_star), config, jobs)
    out = []
    for params, est in zip(params_list, estimates):
        tag = f"(p={params.p}, c={params.c})"
        if isinstance(est, simulator.SweepFailure):
            out.append(CheckResult(f"simulation = g0(Y0*) {tag}", False, est.error))
            continue
        g_star = analytic.optimal_threshold(params).g_star
        diff = abs(est.mean_cost - g_star)
        out.append(CheckResult(f"simulation = g0(Y0*) {tag}", diff <= CI_MULTIPLE * est.ci_halfwidth,
                               f"{est.mean_cost:.5f} vs {g_star:.5f}, CI +/-{est.ci_halfwidth:.2e}"))
    return out


def check_first_passage_mc(points=FIRST_PASSAGE_POINTS, episodes: int = 100_000, seed: int = 7) -> list[CheckResult]:
    out = []
    start = AgeState(1, 1)
    for i, (p, c) in enumerate(points):
        params = ModelParams(p, c)
        est = simulator.first_passage_monte_carlo(params, start, episodes, simulator.derived_seed(seed, i))
        exact = analytic.first_passage_exact(start, params)
        diff = abs(est.mean - exact)
        out.append(CheckResult(f"first passage MC = exact (p={p}, c={c})",
                               diff <= CI_MULTIPLE * est.ci_halfwidth and est.aborted == 0,
                               f"{est.mean:.4f} vs {exact:.4f}, CI +/-{est.ci_halfwidth:.3f}"))
    det = simulator.first_passage_monte_carlo(ModelParams(1.0, 0.0), start, 1_000, seed)
    out.append(CheckResult("first passage deterministic (p=1, c=0) = 3", det.mean == 3.0 and
                           analytic.first_passage_exact(start, ModelParams(1.0, 0.0)) == 3.0,
                           f"MC {det.mean}"))
    return out


def check_vanishing_discount(params: ModelParams = ModelParams(0.5, 5.0),
                             alphas: Sequence[float] = (0.9, 0.99, 0.999), final_gap: float = 0.05) -> CheckResult:
    rep = solver.vanishing_discount_check(params, solver.GridSpec.for_params(params), alphas)
    ok = rep.strictly_decreasing and rep.gaps[-1] <= final_gap
    gaps = ", ".join(f"{g:.4f}" for g in rep.gaps)
    return CheckResult(f"(1-alpha) V_alpha(0,1) -> g (p={params.p}, c={params.c})", ok, f"gaps {gaps}")


def check_figures(p: float = 0.5, c: float = 80.0) -> list[CheckResult]:
    expected = analytic.optimal_threshold(ModelParams(p, c)).Y0_star
    out = []
    for name, problems in (("fig2", figures.check_fig2(figures.fig2_rows(p, c), expected)),
                           ("fig3", figures.check_fig3(figures.fig3_rows())),
                           ("fig4", figures.check_fig4(figures.fig4_rows()))):
        out.append(CheckResult(f"{name} properties", not problems, "; ".join(problems[:2])))
    return out


def run_all(p_grid=DEFAULT_P_GRID, c_grid=DEFAULT_C_GRID, slots: int = 1_000_000, seed: int = 20240601,
            jobs: int = 1) -> list[CheckResult]:
    if not p_grid or not c_grid:
        raise ValueError("parameter grids must be non-empty")
    results = [
        check_special_cases(p_grid),
        check_argmin(p_grid, c_grid),
        check_unimodality(p_grid, c_grid),
        check_lower_bound(p_grid, c_grid),
        check_first_passage_bound(p_grid, c_grid),
    ]
    results += check_solver_sweep(p_grid, c_grid, jobs)
    measured = (slots - min(10_000, slots // 100)) // 30 * 30
    results += check_simulation(slots=slots, warmup=slots - measured, seed=seed, jobs=jobs)
    results += check_first_passage_mc(seed=seed)
    results.append(check_vanishing_discount())
    results += check_figures()
    return results
