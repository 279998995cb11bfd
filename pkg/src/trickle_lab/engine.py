"""Deterministic discrete-event Trickle simulation.

Broadcasts reach every neighbour instantly and without loss. Each node draws
from its own random stream, so the values a node draws do not depend on the
order in which the loop visits nodes. That is what lets the synchronized fast
path reproduce the heap-driven loop bit for bit.
"""

from __future__ import annotations

import heapq
import io
import itertools
import json
import os
import random
from array import array
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .topology import Topology, TopologySpec
from .trickle import (
    TrickleNodeState,
    TrickleParams,
    new_node_state,
    on_hear_consistent,
    on_hear_inconsistent,
    on_interval_end,
    on_timer_t,
    redundancy_update_many,
)

RECORD_FULL = "full"
RECORD_DECISIONS = "decisions"

WARMUP_INTERVALS = 50

# Heap entry kinds. Deliveries are applied inline when a broadcast fires, so
# they always precede any timer entry sharing the same timestamp.
_START, _TIMER, _END = 0, 1, 2

# purpose tags for seed splitting
SEED_TOPOLOGY = 0
SEED_TRICKLE = 1


@dataclass(frozen=True)
class SimConfig:
    duration: float
    seed: int = 0
    synchronized: bool = False
    steady_state: bool = True
    warmup: float | None = None
    record: str = RECORD_FULL

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise ValueError(f"duration must be positive, got {self.duration!r}")
        if self.warmup is not None and not 0 <= self.warmup < self.duration:
            raise ValueError(f"warmup must lie in [0, duration), got {self.warmup!r}")
        if self.record not in (RECORD_FULL, RECORD_DECISIONS):
            raise ValueError(f"record must be 'full' or 'decisions', got {self.record!r}")
        if not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")

    def resolved_warmup(self, params: TrickleParams) -> float:
        """Explicit warmup, else 50 maximal intervals when that fits in the run, else 0."""
        if self.warmup is not None:
            return self.warmup
        default = WARMUP_INTERVALS * params.i_max
        return default if default < self.duration else 0.0


class SimEvent(NamedTuple):
    """One log record.

    ``a``/``b`` depend on ``kind``: interval length for ``interval_start``;
    counter and k for ``broadcast``/``suppressed``; old and new k for
    ``k_change``; the sender for ``heard``; parent and rank for the routing
    kinds ``join`` and ``parent_change``.
    """

    time: float
    node: int
    kind: str
    a: float | int | None = None
    b: int | None = None

    def to_dict(self) -> dict:
        doc = {"time": self.time, "node": self.node, "kind": self.kind}
        keys = _DETAIL_KEYS.get(self.kind, ())
        for key, value in zip(keys, (self.a, self.b)):
            doc[key] = value
        return doc


_DETAIL_KEYS = {
    "interval_start": ("interval_len",),
    "broadcast": ("counter", "k"),
    "suppressed": ("counter", "k"),
    "k_change": ("old_k", "new_k"),
    "heard": ("sender",),
    "join": ("parent", "rank"),
    "parent_change": ("parent", "rank"),
}


class Decisions(NamedTuple):
    """Column arrays, one row per timer-t decision (so one per completed listen phase)."""

    node: np.ndarray
    interval_start: np.ndarray
    time: np.ndarray
    fired: np.ndarray
    counter: np.ndarray
    k: np.ndarray
    interval_len: np.ndarray


class EventLog:
    def __init__(self, topology: Topology, params: TrickleParams, sim: SimConfig) -> None:
        self.topology = topology
        self.params = params
        self.sim = sim
        self.warmup = sim.resolved_warmup(params)
        self.full = sim.record == RECORD_FULL
        self._events: list[tuple] = []
        self._cols = (
            array("l"),
            array("d"),
            array("d"),
            array("b"),
            array("l"),
            array("l"),
            array("d"),
        )
        self._chunks: list[tuple[np.ndarray, ...]] = []
        self.decisions: Decisions | None = None
        self.routing = None

    # -- recording -----------------------------------------------------
    def record(self, time: float, node: int, kind: str, a=None, b=None) -> None:
        if self.full:
            self._events.append((time, node, kind, a, b))

    def record_decision(self, time: float, state: TrickleNodeState, fired: bool) -> None:
        node, start, t, f, c, k, length = self._cols
        node.append(state.node_id)
        start.append(state.interval_start)
        t.append(time)
        f.append(fired)
        c.append(state.counter)
        k.append(state.k)
        length.append(state.interval_len)
        if self.full:
            self._events.append(
                (time, state.node_id, "broadcast" if fired else "suppressed", state.counter, state.k)
            )

    def record_round(
        self,
        start: float,
        interval_len: float,
        times: list[float],
        counters: list[int],
        fired: list[bool],
        ks: list[int],
    ) -> None:
        """Bulk-record one synchronized interval; ``counters[j] < 0`` means no decision."""
        counter = np.asarray(counters, dtype=np.int64)
        idx = np.flatnonzero(counter >= 0)
        m = idx.size
        self._chunks.append(
            (
                idx,
                np.full(m, start),
                np.asarray(times, dtype=np.float64)[idx],
                np.asarray(fired, dtype=bool)[idx],
                counter[idx],
                np.asarray(ks, dtype=np.int64)[idx],
                np.full(m, interval_len),
            )
        )

    def finalize(self) -> EventLog:
        parts = [tuple(np.frombuffer(col, dtype=col.typecode) for col in self._cols)]
        parts.extend(self._chunks)
        cols = [np.concatenate([part[i] for part in parts]) for i in range(len(Decisions._fields))]
        node, start, t, fired, counter, k, length = cols
        order = np.lexsort((node, t))
        self.decisions = Decisions(
            node=node.astype(np.int64)[order],
            interval_start=start.astype(np.float64)[order],
            time=t.astype(np.float64)[order],
            fired=fired.astype(bool)[order],
            counter=counter.astype(np.int64)[order],
            k=k.astype(np.int64)[order],
            interval_len=length.astype(np.float64)[order],
        )
        self._cols = tuple(array(col.typecode) for col in self._cols)
        self._chunks = []
        return self

    # -- access ----------------------------------------------------------
    @property
    def events(self) -> list[SimEvent]:
        if not self.full:
            raise ValueError("event records were not kept (record='decisions')")
        return [SimEvent(*e) for e in self._events]

    def iter_events(self):
        return (SimEvent(*e) for e in self._events)

    @property
    def n(self) -> int:
        return self.topology.n

    def post_warmup_mask(self, warmup: float | None = None) -> np.ndarray:
        w = self.warmup if warmup is None else warmup
        return self.decisions.interval_start >= w

    def node_summary(self, warmup: float | None = None) -> dict[str, np.ndarray]:
        """Per-node counters over intervals starting at or after ``warmup``."""
        d = self.decisions
        mask = self.post_warmup_mask(warmup)
        nodes = d.node[mask]
        fired = d.fired[mask]
        intervals = np.bincount(nodes, minlength=self.n)
        broadcasts = np.bincount(nodes, weights=fired, minlength=self.n).astype(np.int64)
        weight = d.interval_len[mask]
        k_time = np.bincount(nodes, weights=d.k[mask] * weight, minlength=self.n)
        span = np.bincount(nodes, weights=weight, minlength=self.n)
        with np.errstate(invalid="ignore", divide="ignore"):
            probability = np.where(intervals > 0, broadcasts / np.maximum(intervals, 1), np.nan)
            mean_k = np.where(span > 0, k_time / np.where(span > 0, span, 1.0), np.nan)
        return {
            "intervals": intervals,
            "broadcasts": broadcasts,
            "suppressions": intervals - broadcasts,
            "probability": probability,
            "mean_k": mean_k,
        }

    def broadcast_counts(self) -> np.ndarray:
        return np.bincount(self.decisions.node[self.decisions.fired], minlength=self.n)

    # -- export ------------------------------------------------------------
    def to_ndjson(self) -> str:
        out = io.StringIO()
        for event in self.iter_events():
            out.write(json.dumps(event.to_dict()))
            out.write("\n")
        return out.getvalue()

    def summary_csv(self, warmup: float | None = None) -> str:
        s = self.node_summary(warmup)
        degrees = self.topology.degrees()
        lines = ["node,degree,intervals,broadcasts,suppressions,probability,mean_k"]
        for j in range(self.n):
            lines.append(
                f"{j},{degrees[j]},{s['intervals'][j]},{s['broadcasts'][j]},"
                f"{s['suppressions'][j]},{_fmt(s['probability'][j])},{_fmt(s['mean_k'][j])}"
            )
        return "\n".join(lines) + "\n"


def _fmt(x: float) -> str:
    return "" if x != x else f"{x:.9g}"


def node_streams(seed: int, n: int) -> list[random.Random]:
    """Independent per-node streams derived from ``seed`` with SeedSequence spawn keys."""
    streams = []
    for j in range(n):
        words = np.random.SeedSequence(seed, spawn_key=(j,)).generate_state(4, dtype=np.uint32)
        streams.append(random.Random(int.from_bytes(words.tobytes(), "little")))
    return streams


def derive_seed(seed: int, replication: int, purpose: int) -> int:
    """Seed for one replication and purpose.

    The splitting rule is ``SeedSequence(seed, spawn_key=(replication, purpose))``
    reduced to 64 bits, so replication ``r`` can be rerun alone.
    """
    words = np.random.SeedSequence(seed, spawn_key=(replication, purpose)).generate_state(2, dtype=np.uint32)
    return int(words[0]) | (int(words[1]) << 32)


class TrickleSimulator:
    """Heap-driven event loop over per-node Trickle states.

    Subclasses change what a delivery means by overriding :meth:`deliver`
    and choose which nodes start running by overriding :meth:`setup`.
    """

    def __init__(self, topology: Topology, params: TrickleParams, sim: SimConfig) -> None:
        self.topology = topology
        self.params = params
        self.sim = sim
        self.rngs = node_streams(sim.seed, topology.n)
        self.states: list[TrickleNodeState | None] = [None] * topology.n
        self.log = EventLog(topology, params, sim)
        self._heap: list[tuple] = []
        self._seq = itertools.count()
        self._epoch = [0] * topology.n

    @property
    def initial_interval(self) -> float:
        return self.params.i_max if self.sim.steady_state else self.params.i_min

    # -- node lifecycle ------------------------------------------------------
    def _start(self, node: int, now: float, interval_len: float) -> TrickleNodeState:
        state = new_node_state(node, self.params, now, self.rngs[node], interval_len)
        self.states[node] = state
        self.log.record(now, node, "interval_start", state.interval_len)
        return state

    def _roll(self, node: int, now: float) -> TrickleNodeState:
        state = self.states[node]
        old_k = state.k
        on_interval_end(state, now, self.params, self.rngs[node])
        if state.k != old_k:
            self.log.record(now, node, "k_change", old_k, state.k)
        self.log.record(now, node, "interval_start", state.interval_len)
        return state

    def _schedule(self, state: TrickleNodeState) -> None:
        node = state.node_id
        epoch = self._epoch[node]
        heapq.heappush(self._heap, (state.broadcast_time, node, next(self._seq), _TIMER, epoch))
        heapq.heappush(self._heap, (state.interval_end, node, next(self._seq), _END, epoch))

    def activate(self, node: int, now: float, interval_len: float | None = None) -> TrickleNodeState:
        state = self._start(node, now, self.params.i_min if interval_len is None else interval_len)
        self._schedule(state)
        return state

    def reset(self, node: int, now: float) -> bool:
        """Apply the inconsistency rule; returns True if a new interval started."""
        state = self.states[node]
        if state.interval_len <= self.params.i_min:
            return False
        on_hear_inconsistent(state, now, self.params, self.rngs[node])
        self._epoch[node] += 1
        self.log.record(now, node, "interval_start", state.interval_len)
        self._schedule(state)
        return True

    # -- hooks -----------------------------------------------------------------
    def setup(self) -> None:
        first = self.initial_interval
        if self.sim.synchronized:
            for node in range(self.topology.n):
                self.activate(node, 0.0, first)
            return
        for node in range(self.topology.n):
            phase = first * self.rngs[node].random()
            heapq.heappush(self._heap, (phase, node, next(self._seq), _START, 0))

    def deliver(self, sender: int, receiver: int, now: float) -> None:
        state = self.states[receiver]
        if state is not None:
            on_hear_consistent(state)

    # -- loop --------------------------------------------------------------------
    def _timer(self, node: int, now: float) -> None:
        state, decision = on_timer_t(self.states[node])
        self.log.record_decision(now, state, decision.fired)
        if decision.fired:
            record = self.log.record
            deliver = self.deliver
            for nb in self.topology.adjacency[node]:
                record(now, nb, "heard", node)
                deliver(node, nb, now)

    def run(self) -> EventLog:
        if self._fast_path_ok():
            self._run_synchronized()
        else:
            self.setup()
            self._run_heap()
        return self.log.finalize()

    def _fast_path_ok(self) -> bool:
        return (
            self.sim.synchronized
            and type(self).deliver is TrickleSimulator.deliver
            and type(self).setup is TrickleSimulator.setup
        )

    def _run_heap(self) -> None:
        heap = self._heap
        epochs = self._epoch
        duration = self.sim.duration
        while heap:
            now, node, _, kind, epoch = heapq.heappop(heap)
            if now > duration:
                break
            if epoch != epochs[node]:
                continue
            if kind == _TIMER:
                self._timer(node, now)
            elif kind == _END:
                self._schedule(self._roll(node, now))
            else:
                self.activate(node, now, self.initial_interval)

    def _run_synchronized(self) -> None:
        # All nodes share interval boundaries and every message is consistent,
        # so each interval is: timers in (time, node) order, then every node
        # rolls over at the common boundary in node order. Per-node lists stand
        # in for TrickleNodeState here; results match the heap loop exactly.
        n = self.topology.n
        adjacency = self.topology.adjacency
        duration = self.sim.duration
        params = self.params
        policy = params.policy
        log = self.log
        full = log.full
        events = log._events
        rngs = self.rngs

        start = 0.0
        interval_len = self.initial_interval
        half = interval_len / 2.0
        t = [start + half + half * rng.random() for rng in rngs]
        k = [policy.initial_k] * n
        c = [0] * n
        if full:
            events.extend((start, j, "interval_start", interval_len, None) for j in range(n))

        while True:
            counter_at = [-1] * n
            fired = [False] * n
            for j in sorted(range(n), key=t.__getitem__):
                tj = t[j]
                if tj > duration:
                    break
                cj = c[j]
                counter_at[j] = cj
                if cj < k[j]:
                    fired[j] = True
                    if full:
                        events.append((tj, j, "broadcast", cj, k[j]))
                        for nb in adjacency[j]:
                            events.append((tj, nb, "heard", j, None))
                            c[nb] += 1
                    else:
                        for nb in adjacency[j]:
                            c[nb] += 1
                elif full:
                    events.append((tj, j, "suppressed", cj, k[j]))
            log.record_round(start, interval_len, t, counter_at, fired, k)

            end = start + interval_len
            if end > duration:
                break
            new_k = redundancy_update_many(c, policy)
            interval_len = min(2.0 * interval_len, params.i_max)
            if full:
                for j in range(n):
                    if new_k[j] != k[j]:
                        events.append((end, j, "k_change", k[j], new_k[j]))
                    events.append((end, j, "interval_start", interval_len, None))
            k = new_k
            start = end
            half = interval_len / 2.0
            t = [start + half + half * rng.random() for rng in rngs]
            c = [0] * n


def run(topology: Topology, params: TrickleParams, sim: SimConfig) -> EventLog:
    return TrickleSimulator(topology, params, sim).run()


def _run_replication(args) -> EventLog:
    spec, params, sim, r = args
    topology = spec.build(derive_seed(sim.seed, r, SEED_TOPOLOGY))
    return run(topology, params, replace(sim, seed=derive_seed(sim.seed, r, SEED_TRICKLE)))


def worker_count() -> int:
    raw = os.environ.get("TRICKLE_LAB_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"TRICKLE_LAB_THREADS must be an integer, got {raw!r}") from None


def run_batch(
    spec: TopologySpec,
    params: TrickleParams,
    sim: SimConfig,
    replications: int,
    workers: int | None = None,
) -> list[EventLog]:
    """Run independent replications; replication ``r`` gets seeds from :func:`derive_seed`."""
    if replications < 1:
        raise ValueError("replications must be >= 1")
    jobs = [(spec, params, sim, r) for r in range(replications)]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or replications == 1:
        return [_run_replication(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, replications)) as pool:
        return list(pool.map(_run_replication, jobs))
