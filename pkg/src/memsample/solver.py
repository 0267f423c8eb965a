"""Dynamic-programming solutions on a truncated age grid.

The infinite state space is cut to ``0 <= x <= x_max``, ``1 <= y <= y_max``
with ``x <= y``; ages saturate at the caps. Saturation only distorts values
near the caps, so threshold extraction and the structural verifiers ignore
the top 10% of the grid.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import analytic
from .model import Action, ModelParams

BOUNDARY_FRACTION = 0.1
# Relative tolerance under which idle and sample count as tied (ties go to Sample).
TIE_RTOL = 1e-9


@dataclass(frozen=True)
class GridSpec:
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if not (1 <= self.x_max <= self.y_max):
            raise ValueError(f"need 1 <= x_max <= y_max, got x_max={self.x_max}, y_max={self.y_max}")

    @classmethod
    def for_params(cls, params: ModelParams, tail_mass: float = 1e-9) -> GridSpec:
        """Grid large enough that truncation does not move the average cost.

        Besides ``8 * ceil(Y')`` (and at least 64), the cap leaves room for the
        run of stale slots before a write, which is geometric in ``p``: the
        extra ``log(tail_mass) / log(1 - p)`` rows make overflowing the cap a
        ``tail_mass``-probability event.
        """
        y_star = max(math.ceil(analytic.continuous_root(params)), 1)
        y_max = max(8 * y_star, 64)
        if params.p < 1.0:
            y_max = max(y_max, y_star + math.ceil(math.log(tail_mass) / math.log1p(-params.p)))
        return cls(x_max=y_max, y_max=y_max)

    @property
    def interior_x(self) -> int:
        return math.floor((1.0 - BOUNDARY_FRACTION) * self.x_max)

    @property
    def interior_y(self) -> int:
        return math.floor((1.0 - BOUNDARY_FRACTION) * self.y_max)

    def valid_mask(self) -> np.ndarray:
        xs = np.arange(self.x_max + 1)[:, None]
        ys = np.arange(self.y_max + 1)[None, :]
        return (ys >= 1) & (xs <= ys)

    def check_covers(self, params: ModelParams) -> None:
        y0 = analytic.optimal_threshold(params).Y0_star
        if self.y_max < 8 * max(y0, 1):
            raise ValueError(f"y_max={self.y_max} is below 8 * Y0* = {8 * y0} for {params}")


@dataclass(frozen=True)
class ValueTable:
    """Per-state values; entries outside ``x <= y, y >= 1`` are NaN."""

    grid: GridSpec
    values: np.ndarray

    def __getitem__(self, xy: tuple[int, int]) -> float:
        x, y = xy
        if not (0 <= x <= min(y, self.grid.x_max) and 1 <= y <= self.grid.y_max):
            raise IndexError(f"({x}, {y}) is outside the grid")
        return float(self.values[x, y])


@dataclass(frozen=True)
class PolicyTable:
    """Per-state actions (``Action`` codes); entries outside the grid are -1."""

    grid: GridSpec
    actions: np.ndarray

    def __getitem__(self, xy: tuple[int, int]) -> Action:
        x, y = xy
        if not (0 <= x <= min(y, self.grid.x_max) and 1 <= y <= self.grid.y_max):
            raise IndexError(f"({x}, {y}) is outside the grid")
        return Action(int(self.actions[x, y]))

    @classmethod
    def from_rows(cls, grid: GridSpec, rule) -> PolicyTable:
        """Build a table by calling ``rule(x, y) -> Action`` on every grid state."""
        actions = np.full((grid.x_max + 1, grid.y_max + 1), -1, dtype=np.int8)
        for x in range(grid.x_max + 1):
            for y in range(max(x, 1), grid.y_max + 1):
                actions[x, y] = int(rule(x, y))
        return cls(grid, actions)


class _Kernel:
    """Vectorized Bellman operator on the truncated grid.

    Tables are dense ``(x_max + 1, y_max)`` arrays with column ``j`` holding
    ``y = j + 1``. Cells with ``x > y`` are carried along (the dynamics are
    defined there too) but no valid state ever moves into them, so they never
    affect valid values and are masked out of returned tables.
    """

    def __init__(self, params: ModelParams, grid: GridSpec):
        self.params = params
        self.grid = grid
        nx, ny = grid.x_max + 1, grid.y_max
        self.shape = (nx, ny)
        self.mask = grid.valid_mask()[:, 1:]
        xs = np.arange(nx)
        # After a read the client age is x + 1 (column x), saturated at the caps.
        self.read_col = np.minimum(xs, ny - 1)
        self.read_row = np.minimum(xs + 1, nx - 1)
        self.cost = np.arange(1, ny + 1, dtype=float)
        self._ext = np.empty((nx + 1, ny + 1))
        self._work = (np.empty(self.shape), np.empty(self.shape))

    def branches(self, h: np.ndarray, alpha: float = 1.0,
                 out: tuple[np.ndarray, np.ndarray] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Idle and sample right-hand sides of the Bellman equation for table ``h``."""
        p, pbar, c = self.params.p, self.params.pbar, self.params.c
        idle, sample = out if out is not None else (np.empty(self.shape), np.empty(self.shape))
        ext = self._ext
        nx, ny = self.shape
        ext[:nx, :ny] = h
        ext[nx, :ny] = h[nx - 1]
        ext[:, ny] = ext[:, ny - 1]
        np.multiply(ext[1:, 1:], alpha * pbar, out=idle)
        idle += (self.cost + alpha * p * ext[0, 1:])[None, :]
        after_read = p * h[0, self.read_col] + pbar * h[self.read_row, self.read_col]
        np.add(self.cost[None, :], (c + alpha * after_read)[:, None], out=sample)
        return idle, sample

    def bellman(self, h: np.ndarray, alpha: float, out: np.ndarray) -> np.ndarray:
        """Apply the Bellman operator to ``h`` in place into ``out``."""
        idle, sample = self.branches(h, alpha, out=self._work)
        return np.minimum(idle, sample, out=out)

    def to_table(self, h: np.ndarray) -> ValueTable:
        values = np.full((self.grid.x_max + 1, self.grid.y_max + 1), np.nan)
        values[:, 1:] = np.where(self.mask, h, np.nan)
        return ValueTable(self.grid, values)

    def greedy(self, idle: np.ndarray, sample: np.ndarray) -> PolicyTable:
        # Ties go to Sample; float noise must not break an exact tie toward Idle.
        tied_or_better = sample <= idle + TIE_RTOL * np.maximum(1.0, np.abs(idle))
        chosen = np.where(tied_or_better, int(Action.SAMPLE), int(Action.IDLE))
        actions = np.full((self.grid.x_max + 1, self.grid.y_max + 1), -1, dtype=np.int8)
        actions[:, 1:] = np.where(self.mask, chosen, -1)
        return PolicyTable(self.grid, actions)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)


@dataclass(frozen=True)
class DiscountedSolution:
    values: ValueTable
    policy: PolicyTable
    iterations: int
    sup_norm: float
    converged: bool


def value_iteration_iterates(params: ModelParams, grid: GridSpec, alpha: float) -> Iterator[ValueTable]:
    """Successive discounted value-iteration tables v_1, v_2, ... from v_0 = 0."""
    kernel = _Kernel(params, grid)
    v = kernel.zeros()
    while True:
        v = kernel.bellman(v, alpha, out=kernel.zeros())
        yield kernel.to_table(v)


def discounted_value_iteration(params: ModelParams, grid: GridSpec, alpha: float,
                               tol: float = 1e-8, max_iters: int = 1_000_000) -> DiscountedSolution:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    grid.check_covers(params)
    kernel = _Kernel(params, grid)
    threshold = tol * (1.0 - alpha) / (2.0 * alpha)
    v, v_next, diff = kernel.zeros(), kernel.zeros(), kernel.zeros()
    norm = math.inf
    n = 0
    while n < max_iters:
        kernel.bellman(v, alpha, out=v_next)
        np.subtract(v_next, v, out=diff)
        # Unreachable x > y cells contract at the same rate; including them is conservative.
        norm = float(max(diff.max(), -diff.min()))
        v, v_next = v_next, v
        n += 1
        if norm <= threshold:
            break
    converged = norm <= threshold
    if not converged:
        warnings.warn(f"discounted value iteration stopped after {n} sweeps with sup-norm {norm:.3e}",
                      RuntimeWarning, stacklevel=2)
    idle, sample = kernel.branches(v, alpha)
    return DiscountedSolution(kernel.to_table(v), kernel.greedy(idle, sample), n, norm, converged)


@dataclass(frozen=True)
class SolveResult:
    g: float
    f: ValueTable
    policy: PolicyTable
    iterations: int
    span_at_stop: float
    converged: bool


def relative_value_iteration(params: ModelParams, grid: GridSpec, tol: float = 1e-9,
                             max_iters: int = 1_000_000) -> SolveResult:
    """Average-cost relative value iteration with reference state ``(0, 1)``."""
    if tol <= 0.0:
        raise ValueError(f"tol must be positive, got {tol}")
    grid.check_covers(params)
    kernel = _Kernel(params, grid)
    h, h_next, diff = kernel.zeros(), kernel.zeros(), kernel.zeros()
    span = math.inf
    n = 0
    while n < max_iters:
        kernel.bellman(h, 1.0, out=h_next)
        h_next -= h_next[0, 0]
        np.subtract(h_next, h, out=diff)
        span = float(diff.max() - diff.min())
        h, h_next = h_next, h
        n += 1
        if span <= tol:
            break
    converged = span <= tol
    if not converged:
        warnings.warn(f"relative value iteration stopped after {n} sweeps with span {span:.3e}",
                      RuntimeWarning, stacklevel=2)
    idle, sample = kernel.branches(h)
    g = float(min(idle[0, 0], sample[0, 0]))
    return SolveResult(g, kernel.to_table(h), kernel.greedy(idle, sample), n, span, converged)


def extract_threshold(policy: PolicyTable) -> int | None:
    """Threshold read off the ``x = 0`` row, or None if the row is not Idle-then-Sample.

    Rows are scanned only below the boundary band.
    """
    row = policy.actions[0, 1:policy.grid.interior_y + 1]
    sampled = np.flatnonzero(row == int(Action.SAMPLE))
    if sampled.size == 0:
        return None
    first = int(sampled[0])
    if not np.all(row[first:] == int(Action.SAMPLE)):
        return None
    return first + 1


@dataclass(frozen=True)
class VerifierReport:
    name: str
    checked: int
    violations: int
    worst: float  # largest violation magnitude; 0 when none

    @property
    def passed(self) -> bool:
        return self.violations == 0


def _report(name: str, excess: np.ndarray) -> VerifierReport:
    excess = excess[~np.isnan(excess)]
    bad = excess[excess > 0.0]
    return VerifierReport(name, int(excess.size), int(bad.size), float(bad.max()) if bad.size else 0.0)


def _interior(grid: GridSpec) -> tuple[int, int]:
    return grid.interior_x, grid.interior_y


def verify_monotone(table: ValueTable, eps: float = 1e-9) -> VerifierReport:
    """Values non-decreasing in x and in y over interior states."""
    ix, iy = _interior(table.grid)
    v = table.values[: ix + 1, : iy + 1]
    drop_y = v[:, :-1] - v[:, 1:] - eps  # V(x,y) - V(x,y+1)
    drop_x = v[:-1, :] - v[1:, :] - eps  # V(x,y) - V(x+1,y)
    return _report("monotone", np.concatenate([drop_y.ravel(), drop_x.ravel()]))


def verify_threshold_in_y(policy: PolicyTable) -> VerifierReport:
    """Along each row, once Sample appears it persists for larger y."""
    ix, iy = _interior(policy.grid)
    a = policy.actions[: ix + 1, : iy + 1].astype(float)
    a[a < 0] = np.nan
    # Sample (1) followed by Idle (0) in the next column is a violation.
    excess = a[:, :-1] - a[:, 1:]
    return _report("threshold_in_y", excess - 0.5)


def verify_concavity_in_y(table: ValueTable, eps: float = 1e-9) -> VerifierReport:
    """Increments V(x, y+1) - V(x, y) non-increasing in y over interior states."""
    ix, iy = _interior(table.grid)
    v = table.values[: ix + 1, : iy + 1]
    d = np.diff(v, axis=1)
    excess = d[:, 1:] - d[:, :-1] - eps
    return _report("concavity_in_y", excess)


def verify_diagonal_idle(policy: PolicyTable) -> VerifierReport:
    """Idle at (x, y) implies Idle at every interior (x+i, y+i)."""
    ix, iy = _interior(policy.grid)
    a = policy.actions[: ix + 1, : iy + 1].astype(float)
    a[a < 0] = np.nan
    # Checking consecutive diagonal neighbours is enough: Idle propagates step by step.
    excess = a[1:, 1:] - a[:-1, :-1]  # Sample at (x+1,y+1) after Idle at (x,y) gives 1
    return _report("diagonal_idle", excess - 0.5)


def verify_all(values: ValueTable, policy: PolicyTable, eps: float = 1e-9) -> list[VerifierReport]:
    return [
        verify_monotone(values, eps),
        verify_threshold_in_y(policy),
        verify_concavity_in_y(values, eps),
        verify_diagonal_idle(policy),
    ]


@dataclass(frozen=True)
class VanishingDiscountReport:
    g: float
    alphas: tuple[float, ...]
    scaled_values: tuple[float, ...]  # (1 - alpha) V_alpha(0, 1)
    gaps: tuple[float, ...]

    @property
    def strictly_decreasing(self) -> bool:
        return all(b < a for a, b in zip(self.gaps, self.gaps[1:]))


def vanishing_discount_check(params: ModelParams, grid: GridSpec, alphas: Sequence[float],
                             tol: float = 1e-6, g: float | None = None) -> VanishingDiscountReport:
    """Compare ``(1 - alpha) V_alpha(0, 1)`` with the average cost as alpha grows."""
    if g is None:
        g = relative_value_iteration(params, grid).g
    scaled = []
    for alpha in alphas:
        sol = discounted_value_iteration(params, grid, alpha, tol=tol)
        scaled.append((1.0 - alpha) * sol.values[0, 1])
    gaps = tuple(abs(s - g) for s in scaled)
    return VanishingDiscountReport(g, tuple(alphas), tuple(scaled), gaps)
