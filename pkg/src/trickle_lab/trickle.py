"""Per-node Trickle state machine with fixed or adaptive redundancy constant.

The functions here update a :class:`TrickleNodeState` in place and return it,
so a simulation loop can hold one mutable state object per node.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np


@dataclass(frozen=True)
class Fixed:
    """Original Trickle: the redundancy constant never changes."""

    k: int

    def __post_init__(self) -> None:
        if not isinstance(self.k, int) or self.k < 1:
            raise ValueError(f"fixed k must be a positive integer, got {self.k!r}")

    @property
    def initial_k(self) -> int:
        return self.k

    def label(self) -> str:
        return f"fixed_k{self.k}"


@dataclass(frozen=True)
class Adaptive:
    """Adaptive-k: at each interval end, k is recomputed from the heard count."""

    alpha: float
    k_min: int = 1
    k_max: int = 10

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha!r}")
        if not isinstance(self.k_min, int) or self.k_min < 1:
            raise ValueError(f"k_min must be a positive integer, got {self.k_min!r}")
        if not isinstance(self.k_max, int) or self.k_max < self.k_min:
            raise ValueError(f"k_max must be an integer >= k_min, got {self.k_max!r}")

    @property
    def initial_k(self) -> int:
        # Start high; the single-cell dynamics converge downward from any start.
        return self.k_max

    def label(self) -> str:
        return f"adaptive_a{self.alpha:.4g}_k{self.k_min}-{self.k_max}"


RedundancyPolicy = Union[Fixed, Adaptive]


@dataclass(frozen=True)
class TrickleParams:
    i_min: float
    i_max: float
    policy: RedundancyPolicy

    def __post_init__(self) -> None:
        if not self.i_min > 0:
            raise ValueError(f"i_min must be positive, got {self.i_min!r}")
        if not self.i_max >= self.i_min:
            raise ValueError(f"i_max must be >= i_min, got {self.i_max!r} < {self.i_min!r}")


@dataclass(slots=True)
class TrickleNodeState:
    node_id: int
    interval_len: float
    interval_start: float
    broadcast_time: float
    counter: int
    k: int
    broadcast_fired: bool = False

    @property
    def interval_end(self) -> float:
        return self.interval_start + self.interval_len


class BroadcastDecision(NamedTuple):
    fired: bool
    counter_at_t: int
    k_at_t: int


def redundancy_update(c: int, policy: RedundancyPolicy) -> int:
    """Return the redundancy constant to use after hearing ``c`` messages.

    For an :class:`Adaptive` policy this is ``floor(alpha * c)`` clamped to
    ``[k_min, k_max]``; a :class:`Fixed` policy returns its ``k``.
    """
    if isinstance(policy, Fixed):
        return policy.k
    scaled = policy.alpha * c
    if scaled < policy.k_min:
        return policy.k_min
    if scaled > policy.k_max:
        return policy.k_max
    return math.floor(scaled)


def redundancy_update_many(counts, policy: RedundancyPolicy) -> list[int]:
    """Vectorized :func:`redundancy_update` over a sequence of counters."""
    if isinstance(policy, Fixed):
        return [policy.k] * len(counts)
    scaled = np.floor(policy.alpha * np.asarray(counts, dtype=np.float64))
    return np.clip(scaled, policy.k_min, policy.k_max).astype(np.int64).tolist()


def start_interval(state: TrickleNodeState, now: float, rng: random.Random) -> TrickleNodeState:
    half = state.interval_len / 2.0
    state.interval_start = now
    state.counter = 0
    state.broadcast_fired = False
    state.broadcast_time = now + half + half * rng.random()
    return state


def new_node_state(
    node_id: int,
    params: TrickleParams,
    now: float,
    rng: random.Random,
    interval_len: float | None = None,
) -> TrickleNodeState:
    """Create a node whose first interval starts at ``now``.

    ``interval_len`` defaults to ``params.i_min``; steady-state runs pass
    ``params.i_max``.
    """
    state = TrickleNodeState(
        node_id=node_id,
        interval_len=params.i_min if interval_len is None else interval_len,
        interval_start=now,
        broadcast_time=now,
        counter=0,
        k=params.policy.initial_k,
    )
    return start_interval(state, now, rng)


def on_hear_consistent(state: TrickleNodeState) -> TrickleNodeState:
    state.counter += 1
    return state


def on_timer_t(state: TrickleNodeState) -> tuple[TrickleNodeState, BroadcastDecision]:
    """Decide whether to broadcast at time ``t``.

    A node's own broadcast does not count toward its own counter.
    """
    if state.broadcast_fired:
        raise RuntimeError(
            f"node {state.node_id}: timer t processed twice in the interval "
            f"starting at {state.interval_start!r}"
        )
    state.broadcast_fired = True
    decision = BroadcastDecision(
        fired=state.counter < state.k, counter_at_t=state.counter, k_at_t=state.k
    )
    return state, decision


def on_interval_end(
    state: TrickleNodeState, now: float, params: TrickleParams, rng: random.Random
) -> TrickleNodeState:
    # k must be computed from the ending interval's counter before the reset.
    if isinstance(params.policy, Adaptive):
        state.k = redundancy_update(state.counter, params.policy)
    state.interval_len = min(2.0 * state.interval_len, params.i_max)
    return start_interval(state, now, rng)


def on_hear_inconsistent(
    state: TrickleNodeState, now: float, params: TrickleParams, rng: random.Random
) -> TrickleNodeState:
    if state.interval_len > params.i_min:
        state.interval_len = params.i_min
        start_interval(state, now, rng)
    return state
