"""MDP primitives for the reader/writer memory-sampling problem.

A state is the pair ``(x, y)``: the age of the update held in memory and the
age of the update last delivered to the client, both measured at the start of
a slot. Each slot the reader either idles or samples; at the end of the slot
the writer commits a fresh update with probability ``p``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum


class Action(IntEnum):
    IDLE = 0
    SAMPLE = 1


@dataclass(frozen=True)
class ModelParams:
    """Write probability ``p`` per slot and per-read sampling cost ``c``."""

    p: float
    c: float

    def __post_init__(self) -> None:
        if not (isinstance(self.p, (int, float)) and 0.0 < self.p <= 1.0):
            raise ValueError(f"p must satisfy 0 < p <= 1, got p={self.p!r}")
        if not (isinstance(self.c, (int, float)) and math.isfinite(self.c) and self.c >= 0.0):
            raise ValueError(f"c must be finite and c >= 0, got c={self.c!r}")

    @property
    def pbar(self) -> float:
        return 1.0 - self.p


@dataclass(frozen=True, order=True)
class AgeState:
    x: int
    y: int

    def __post_init__(self) -> None:
        if isinstance(self.x, bool) or isinstance(self.y, bool):
            raise TypeError("ages must be integers")
        if not (isinstance(self.x, int) and isinstance(self.y, int)):
            raise TypeError(f"ages must be integers, got ({self.x!r}, {self.y!r})")
        if self.x < 0 or self.y < 1:
            raise ValueError(f"need x >= 0 and y >= 1, got ({self.x}, {self.y})")
        if self.x > self.y:
            raise ValueError(f"need x <= y, got ({self.x}, {self.y})")


# A transition law is a tuple of (next_state, probability) pairs; zero-probability
# branches are dropped so p = 1 stays exact.
TransitionLaw = tuple[tuple[AgeState, float], ...]


def transition(s: AgeState, a: Action, params: ModelParams) -> TransitionLaw:
    """Next-state distribution from ``s`` under action ``a``.

    Sampling hands the client the memory's current update, so the client age
    becomes ``x + 1``; idling lets it grow to ``y + 1``. In both cases the
    memory age resets to 0 with probability ``p`` or grows to ``x + 1``.
    """
    a = Action(a)
    y_next = s.x + 1 if a is Action.SAMPLE else s.y + 1
    branches = (
        (AgeState(0, y_next), params.p),
        (AgeState(s.x + 1, y_next), params.pbar),
    )
    return tuple((state, prob) for state, prob in branches if prob > 0.0)


def stage_cost(s: AgeState, a: Action, params: ModelParams) -> float:
    return s.y + params.c * int(Action(a))


def is_feasible_under_threshold(s: AgeState, y0: int) -> bool:
    """Membership in the set of states reachable under threshold ``y0``.

    That set is every ``(0, y)`` plus every off-axis ``(x, y)`` with
    ``y - x < y0``.
    """
    if y0 < 1:
        raise ValueError(f"threshold must be >= 1, got {y0}")
    return s.x == 0 or s.y - s.x < y0


def threshold_action(s: AgeState, y0: int) -> Action:
    """Action of the threshold-``y0`` policy, extended to every state.

    Samples iff ``y - x >= y0``. On the ``x = 0`` axis this is "sample once the
    client age reaches ``y0``"; every reachable off-axis state idles.
    """
    return Action.SAMPLE if s.y - s.x >= y0 else Action.IDLE
