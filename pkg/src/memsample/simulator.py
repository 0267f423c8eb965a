"""Slot-level Monte Carlo simulation of the writer/reader system.

Randomness comes from numpy's ``PCG64`` bit generator seeded with the
caller's 64-bit seed; one uniform draw per slot decides whether the writer
commits at the end of that slot. The reader's action is chosen before the
draw.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np
from scipy import stats

from .model import AgeState, ModelParams
from .solver import PolicyTable

RNG_NAME = "numpy.random.PCG64"
FIRST_PASSAGE_SLOT_CAP = 10_000_000
_CHUNK = 1 << 16


@dataclass(frozen=True)
class Threshold:
    """Sample iff ``y - x >= y0``: on the fresh-memory axis, once the client age reaches ``y0``."""

    y0: int

    def __post_init__(self) -> None:
        if isinstance(self.y0, bool) or not isinstance(self.y0, int) or self.y0 < 1:
            raise ValueError(f"threshold must be an integer >= 1, got {self.y0!r}")

    def __str__(self) -> str:
        return f"threshold:{self.y0}"


@dataclass(frozen=True)
class AlwaysSample:
    def __str__(self) -> str:
        return "always"


@dataclass(frozen=True)
class NeverSample:
    def __str__(self) -> str:
        return "never"


@dataclass(frozen=True)
class Periodic:
    """Sample in slots ``0, k, 2k, ...`` regardless of state."""

    k: int

    def __post_init__(self) -> None:
        if isinstance(self.k, bool) or not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"period must be an integer >= 1, got {self.k!r}")

    def __str__(self) -> str:
        return f"periodic:{self.k}"


@dataclass(frozen=True)
class TablePolicy:
    """Actions looked up in a solved policy table; ages past the caps use the cap row/column."""

    policy: PolicyTable

    def __str__(self) -> str:
        return f"table:{self.policy.grid.x_max}x{self.policy.grid.y_max}"


PolicySpec = Union[Threshold, AlwaysSample, NeverSample, Periodic, TablePolicy]


def parse_policy(text: str) -> PolicySpec:
    """Parse ``threshold:<int>``, ``always``, ``never`` or ``periodic:<int>``."""
    name, _, arg = text.strip().partition(":")
    if name in ("always", "never") and not arg:
        return AlwaysSample() if name == "always" else NeverSample()
    if name in ("threshold", "periodic") and arg:
        try:
            value = int(arg)
        except ValueError:
            raise ValueError(f"malformed policy {text!r}: {arg!r} is not an integer") from None
        return Threshold(value) if name == "threshold" else Periodic(value)
    raise ValueError(f"malformed policy {text!r}; expected threshold:<int>, always, never or periodic:<int>")


def _decider(policy: PolicySpec) -> Callable[[int, int, int], int]:
    if isinstance(policy, Threshold):
        y0 = policy.y0
        return lambda x, y, t: 1 if y - x >= y0 else 0
    if isinstance(policy, AlwaysSample):
        return lambda x, y, t: 1
    if isinstance(policy, NeverSample):
        return lambda x, y, t: 0
    if isinstance(policy, Periodic):
        k = policy.k
        return lambda x, y, t: 1 if t % k == 0 else 0
    if isinstance(policy, TablePolicy):
        actions = policy.policy.actions
        xcap, ycap = policy.policy.grid.x_max, policy.policy.grid.y_max

        def table(x: int, y: int, t: int) -> int:
            return int(actions[min(x, xcap), min(y, ycap)])
        return table
    raise TypeError(f"unknown policy {policy!r}")


def step(x: int, y: int, a: int, u: float, p: float) -> tuple[int, int]:
    """One slot of the kernel: ``u < p`` means the writer commits at slot end."""
    y_next = x + 1 if a else y + 1
    return (0 if u < p else x + 1), y_next


def _uniforms(rng: np.random.Generator):
    while True:
        yield from rng.random(_CHUNK).tolist()


def _rng(seed: int) -> np.random.Generator:
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)) or not 0 <= seed < 2 ** 64:
        raise ValueError(f"seed must be an integer in [0, 2**64), got {seed!r}")
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True)
class SimConfig:
    slots: int
    warmup: int = 0
    seed: int = 0
    batches: int = 30

    def __post_init__(self) -> None:
        if self.slots < 1 or self.warmup < 0 or self.warmup >= self.slots:
            raise ValueError(f"need 0 <= warmup < slots, got warmup={self.warmup}, slots={self.slots}")
        if self.batches < 2:
            raise ValueError(f"need at least 2 batches, got {self.batches}")
        if (self.slots - self.warmup) % self.batches:
            raise ValueError(f"batches={self.batches} must divide slots - warmup = {self.slots - self.warmup}")
        _rng(self.seed)

    @property
    def batch_size(self) -> int:
        return (self.slots - self.warmup) // self.batches


@dataclass(frozen=True)
class SimEstimate:
    mean_cost: float
    ci_halfwidth: float
    mean_age: float
    sample_rate: float
    seed: int


def _halfwidth(values: np.ndarray, level: float = 0.95) -> float:
    n = values.size
    if n < 2:
        return math.inf
    sd = float(np.std(values, ddof=1))
    return float(stats.t.ppf(0.5 + level / 2.0, n - 1)) * sd / math.sqrt(n)


def simulate(params: ModelParams, policy: PolicySpec, config: SimConfig) -> SimEstimate:
    """Long-run average cost of ``policy`` from state ``(0, 1)``, with a batch-means 95% CI."""
    if isinstance(policy, NeverSample):
        warnings.warn("never sampling: client age grows linearly, the estimate is horizon-dependent",
                      RuntimeWarning, stacklevel=2)
    decide = _decider(policy)
    p, c = params.p, params.c
    draws = _uniforms(_rng(config.seed))
    batch_size, warmup = config.batch_size, config.warmup

    batch_cost = np.empty(config.batches)
    age_total = 0
    samples = 0
    x, y = 0, 1
    acc = 0.0
    filled = 0
    for t in range(config.slots):
        assert 0 <= x <= y
        a = decide(x, y, t)
        if t >= warmup:
            acc += y + c * a
            age_total += y
            samples += a
            if (t - warmup + 1) % batch_size == 0:
                batch_cost[filled] = acc / batch_size
                filled += 1
                acc = 0.0
        x, y = step(x, y, a, next(draws), p)

    measured = config.slots - warmup
    return SimEstimate(
        mean_cost=float(batch_cost.mean()),
        ci_halfwidth=_halfwidth(batch_cost),
        mean_age=age_total / measured,
        sample_rate=samples / measured,
        seed=config.seed,
    )


@dataclass(frozen=True)
class FirstPassageEstimate:
    mean: float
    ci_halfwidth: float
    episodes: int  # completed episodes
    aborted: int  # episodes that hit the slot cap
    seed: int


def first_passage_monte_carlo(params: ModelParams, start: AgeState, episodes: int, seed: int,
                              slot_cap: int = FIRST_PASSAGE_SLOT_CAP) -> FirstPassageEstimate:
    """Cost accumulated under always-sample from ``start`` until the chain first enters ``(0, 1)``.

    The slot spent in ``start`` always counts, so a start at ``(0, 1)`` measures a return.
    """
    if episodes < 1:
        raise ValueError(f"need episodes >= 1, got {episodes}")
    p, c = params.p, params.c
    draws = _uniforms(_rng(seed))
    totals = []
    aborted = 0
    for _ in range(episodes):
        x, y = start.x, start.y
        total = 0.0
        for _slot in range(slot_cap):
            total += y + c
            x, y = step(x, y, 1, next(draws), p)
            if x == 0 and y == 1:
                totals.append(total)
                break
        else:
            aborted += 1
    if not totals:
        raise RuntimeError(f"all {episodes} episodes exceeded the {slot_cap}-slot cap")
    values = np.asarray(totals)
    return FirstPassageEstimate(float(values.mean()), _halfwidth(values), values.size, aborted, seed)


@dataclass(frozen=True)
class SweepFailure:
    index: int
    params: ModelParams
    error: str


def derived_seed(base_seed: int, index: int) -> int:
    return base_seed ^ index


def _run_point(args):
    index, params, policy, config = args
    try:
        return simulate(params, policy, config)
    except Exception as exc:  # one bad point must not sink the sweep
        return SweepFailure(index, params, f"{type(exc).__name__}: {exc}")


def sweep_simulate(params_list: Sequence[ModelParams], policy_factory: Callable[[ModelParams], PolicySpec],
                   config: SimConfig, max_workers: int = 1) -> list[SimEstimate | SweepFailure]:
    """Simulate every parameter point with seed ``config.seed ^ index``; results keep input order."""
    jobs = []
    for i, params in enumerate(params_list):
        try:
            policy = policy_factory(params)
            point_config = SimConfig(config.slots, config.warmup, derived_seed(config.seed, i), config.batches)
        except Exception as exc:
            jobs.append(SweepFailure(i, params, f"{type(exc).__name__}: {exc}"))
            continue
        jobs.append((i, params, policy, point_config))

    pending = [j for j in jobs if not isinstance(j, SweepFailure)]
    if max_workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=max_workers) as pool:
            done = dict(zip((j[0] for j in pending), pool.map(_run_point, pending)))
    else:
        done = {j[0]: _run_point(j) for j in pending}
    return [j if isinstance(j, SweepFailure) else done[j[0]] for j in jobs]
