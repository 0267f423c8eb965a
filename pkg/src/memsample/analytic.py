"""Closed-form results for threshold policies.

Everything here is exact arithmetic in double precision: the average cost of a
threshold policy, the optimal threshold and its lower bound, the relative-cost
table of the optimal threshold policy, and first-passage costs under the
always-sample policy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping

from .model import Action, AgeState, ModelParams, is_feasible_under_threshold, threshold_action

REFERENCE_STATE = AgeState(0, 1)


def _check_threshold(y0) -> int:
    if isinstance(y0, bool) or int(y0) != y0:
        raise TypeError(f"threshold must be an integer, got {y0!r}")
    y0 = int(y0)
    if y0 < 1:
        raise ValueError(f"threshold must be >= 1, got {y0}")
    return y0


def g0(y0: int, params: ModelParams) -> float:
    """Long-run average cost of the threshold-``y0`` policy."""
    y0 = _check_threshold(y0)
    return g0_relaxed(float(y0), params)


def g0_relaxed(y: float, params: ModelParams) -> float:
    """``g0`` evaluated at a real threshold ``y`` (used for the lower bound)."""
    p, pbar, c = params.p, params.pbar, params.c
    denom = p * y + pbar
    if denom <= 0.0:
        raise ValueError(f"g0 undefined at y={y} for p={p}")
    return 0.5 * (1.0 / p + y + (2.0 * c * p + pbar / p) / denom)


def threshold_quadratic(y: float, params: ModelParams) -> float:
    """``y**2 + (2/p - 1) y - 2c``; its sign is the sign of ``g0(y+1) - g0(y)``."""
    return y * y + (2.0 / params.p - 1.0) * y - 2.0 * params.c


def g0_step(y0: int, params: ModelParams) -> float:
    """``g0(y0) - g0(y0 + 1)`` in factored form."""
    y0 = _check_threshold(y0)
    p, pbar = params.p, params.pbar
    return -0.5 * p * p * threshold_quadratic(y0, params) / ((p * y0 + pbar) * (p * y0 + 1.0))


def continuous_root(params: ModelParams) -> float:
    """The non-negative root of ``threshold_quadratic``."""
    half = 1.0 / params.p - 0.5
    return math.sqrt(2.0 * params.c + half * half) - half


def lower_bound(params: ModelParams) -> float:
    p = params.p
    return 0.5 + math.sqrt(2.0 * params.c + 1.0 / (p * p) - 1.0 / p)


def continuous_minimizer(params: ModelParams) -> float:
    """Real ``y`` minimizing ``g0_relaxed``; ``g0_relaxed`` there equals ``lower_bound``."""
    p, pbar = params.p, params.pbar
    return -pbar / p + math.sqrt(2.0 * params.c + pbar / (p * p))


@dataclass(frozen=True)
class ClosedFormReport:
    Y0_star: int
    Y_prime: float
    g_star: float
    lower_bound: float
    Y0_tilde: float
    tie: bool = False  # Y0_star + 1 attains the same cost


def optimal_threshold(params: ModelParams) -> ClosedFormReport:
    y_prime = continuous_root(params)
    # Least integer n >= 1 with Q(n) >= 0, i.e. ceil(Y'); corrected by one
    # step if rounding in the square root lands on the wrong side of an integer.
    n = max(math.ceil(y_prime), 1)
    if n > 1 and threshold_quadratic(n - 1, params) >= 0.0:
        n -= 1
    elif threshold_quadratic(n, params) < 0.0:
        n += 1
    return ClosedFormReport(
        Y0_star=n,
        Y_prime=y_prime,
        g_star=g0(n, params),
        lower_bound=lower_bound(params),
        Y0_tilde=continuous_minimizer(params),
        tie=threshold_quadratic(n, params) == 0.0,
    )


def brute_force_threshold(params: ModelParams, upper: int = 10_000) -> tuple[int, float]:
    """Integer argmin of ``g0`` over ``1..upper`` by direct evaluation (first minimizer)."""
    best_y0, best_g = 1, g0(1, params)
    for y0 in range(2, upper + 1):
        g = g0(y0, params)
        if g < best_g:
            best_y0, best_g = y0, g
    return best_y0, best_g


class MissingRelativeCost(KeyError):
    pass


@dataclass(frozen=True)
class RelativeCostProfile:
    """Relative costs of the threshold-``Y0`` policy on the reachable states.

    ``f_values`` holds every reachable ``(x, y)`` with ``y <= y_extent``.
    """

    g: float
    J0: float
    Y0: int
    params: ModelParams
    y_extent: int
    f_values: Mapping[AgeState, float] = field(repr=False)

    def __getitem__(self, s: AgeState) -> float:
        try:
            return self.f_values[s]
        except KeyError:
            raise MissingRelativeCost(s) from None

    def __contains__(self, s: AgeState) -> bool:
        return s in self.f_values

    def replace_value(self, s: AgeState, value: float) -> RelativeCostProfile:
        if s not in self.f_values:
            raise MissingRelativeCost(s)
        values = dict(self.f_values)
        values[s] = value
        return RelativeCostProfile(self.g, self.J0, self.Y0, self.params, self.y_extent,
                                   MappingProxyType(values))


def _diagonal_idle_value(y: int, g: float, f_axis_next: float, params: ModelParams) -> float:
    # Idling along (x, y), (x+1, y+1), ... until the next write, with the axis
    # values past the threshold growing by exactly one per slot:
    #   f(x, y) = J/p + pbar/p**2 - 1,  J = (y + 1) - g + p f(0, y + 1).
    p, pbar = params.p, params.pbar
    j = (y + 1) - g + p * f_axis_next
    return (j + pbar / p) / p - 1.0


def relative_cost_profile(params: ModelParams, y0: int, y_extent: int | None = None) -> RelativeCostProfile:
    """Relative-cost table of the threshold-``y0`` policy, ``f(0, 1) = 0``.

    Requires ``y0 > 1``. Below the threshold ``f`` does not depend on ``x``;
    at and past it the axis values grow by one per slot and off-axis values
    follow from idling down the diagonal until the next write.
    """
    y0 = _check_threshold(y0)
    if y0 <= 1:
        raise ValueError("relative-cost profile needs a threshold > 1")
    if y_extent is None:
        y_extent = y0 + 10
    if y_extent < y0 + 1:
        raise ValueError(f"y_extent must be >= Y0 + 1 = {y0 + 1}")

    p, pbar, c = params.p, params.pbar, params.c
    g = g0(y0, params)
    f_at_threshold = y0 - g + c
    j0 = y0 - g + p * f_at_threshold
    f_below = (j0 + pbar / p) / p - 1.0  # f(x, y0 - 1) for every x

    axis: dict[int, float] = {}
    for k in range(1, y0):
        axis[y0 - k] = (k - 1) * (y0 - g) - k * (k + 1) / 2 + 1 + f_below
    for y in range(y0, y_extent + 2):
        axis[y] = f_at_threshold + (y - y0)

    values: dict[AgeState, float] = {}
    for y in range(1, y_extent + 1):
        for x in range(0, y + 1):
            s = AgeState(x, y)
            if not is_feasible_under_threshold(s, y0):
                continue
            if x == 0 or y < y0:
                values[s] = axis[y]
            else:
                values[s] = _diagonal_idle_value(y, g, axis[y + 1], params)
    return RelativeCostProfile(g, j0, y0, params, y_extent, MappingProxyType(values))


def _profile_value(profile: RelativeCostProfile, s: AgeState) -> float:
    if s in profile:
        return profile[s]
    y0, params = profile.Y0, profile.params
    if s.x == 0 and s.y > y0 and s.y > profile.y_extent:
        # Past the threshold the axis relative cost rises by one per slot.
        return profile[AgeState(0, profile.y_extent)] + (s.y - profile.y_extent)
    if not is_feasible_under_threshold(s, y0) and threshold_action(s, y0) is Action.SAMPLE:
        nxt_fresh, nxt_stale = AgeState(0, s.x + 1), AgeState(s.x + 1, s.x + 1)
        return (s.y + params.c - profile.g
                + params.p * _profile_value(profile, nxt_fresh)
                + params.pbar * _profile_value(profile, nxt_stale))
    raise MissingRelativeCost(s)


def bellman_expressions(profile: RelativeCostProfile, s: AgeState) -> tuple[float, float]:
    """(idle, sample) right-hand sides of the relative-cost Bellman equation at ``s``."""
    p, pbar, c = profile.params.p, profile.params.pbar, profile.params.c
    idle = s.y + p * _profile_value(profile, AgeState(0, s.y + 1)) \
        + pbar * _profile_value(profile, AgeState(s.x + 1, s.y + 1))
    sample = s.y + c + p * _profile_value(profile, AgeState(0, s.x + 1)) \
        + pbar * _profile_value(profile, AgeState(s.x + 1, s.x + 1))
    return idle, sample


def bellman_residual(profile: RelativeCostProfile, params: ModelParams, y0: int, state: AgeState) -> float:
    """``g + f(s) - min(idle, sample)``; zero when the profile solves the equation."""
    if params != profile.params or y0 != profile.Y0:
        raise ValueError("profile was built for different parameters or threshold")
    if not is_feasible_under_threshold(state, y0):
        raise ValueError(f"{state} is not reachable under threshold {y0}")
    idle, sample = bellman_expressions(profile, state)
    return profile.g + profile[state] - min(idle, sample)


def first_passage_from_diagonal(params: ModelParams) -> float:
    """Expected always-sample cost from ``(1, 1)`` until the chain enters ``(0, 1)``."""
    p, c = params.p, params.c
    return ((1.0 / p + 1.0) * (c + 1.0) + 1.0 / (p * p)) / p


def first_passage_exact(s: AgeState, params: ModelParams) -> float:
    """Expected cost to reach ``(0, 1)`` from ``s`` when the reader samples every slot.

    From a diagonal state ``(k, k)`` the chain idles down the diagonal for a
    geometric number ``N`` of slots, spends one slot on the fresh-memory axis
    and then either stops or restarts from ``(1, 1)``; with
    ``E[N (N - 1) / 2] = pbar / p**2`` this gives
    ``(c + k)/p + (c + k) + 1/p**2 + pbar * M(1, 1)``. Off the diagonal only
    the first slot differs (it costs ``y`` instead of ``x``), and a start on
    the axis reaches ``(0, 1)`` or ``(1, 1)`` after one slot. The slot spent in
    ``s`` always counts, so ``s = (0, 1)`` gives the expected return cost.
    """
    p, pbar, c = params.p, params.pbar, params.c
    m11 = first_passage_from_diagonal(params)
    if s.x == 0:
        return c + s.y + pbar * m11
    diagonal = (c + s.x) / p + (c + s.x) + 1.0 / (p * p) + pbar * m11
    return diagonal + (s.y - s.x)


def first_passage_bound(s: AgeState, params: ModelParams) -> float:
    p = params.p
    return (1.0 + p) / (p * p) * (params.c + s.y) + 3.0 / (2.0 * p ** 3)
