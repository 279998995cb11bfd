"""Upward-route RPL on top of the Trickle simulator, idealized channel.

DIOs carry the sender's hop-count rank. An unjoined node adopts the first
sender it hears as preferred parent. A joined node moves only to a strictly
lower rank; such a move (or a rank drop inherited from its own parent) makes
the DIO inconsistent and resets the node's Trickle timer. Every other DIO is
consistent and counts toward ``c``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .engine import EventLog, SimConfig, TrickleSimulator
from .metrics import fairness_index
from .topology import Topology
from .trickle import TrickleNodeState, TrickleParams, on_hear_consistent

log = logging.getLogger(__name__)

# Defaults in seconds: 2^3 ms and 2^23 ms intervals, two simulated hours.
RPL_I_MIN = 0.008
RPL_I_MAX = 8388.608
RPL_DURATION = 7200.0


@dataclass
class RplNodeState:
    rank: int | None = None
    preferred_parent: int | None = None
    joined_at: float | None = None
    trickle: TrickleNodeState | None = None

    @property
    def joined(self) -> bool:
        return self.rank is not None


class DioMessage(NamedTuple):
    sender: int
    rank: int


@dataclass(frozen=True)
class RoutingOutcome:
    root: int
    ranks: list[int | None]
    parents: list[int | None]
    joined_at: list[float | None]


class RplSimulator(TrickleSimulator):
    """Only joined nodes run Trickle; the root joins at time 0 with ``I = i_min``."""

    def __init__(self, topology: Topology, root: int, params: TrickleParams, sim: SimConfig) -> None:
        if not 0 <= root < topology.n:
            raise ValueError(f"root {root} is not a node of the topology")
        super().__init__(topology, params, replace(sim, steady_state=False))
        self.root = root
        self.nodes = [RplNodeState() for _ in range(topology.n)]

    def setup(self) -> None:
        root = self.nodes[self.root]
        root.rank = 0
        root.joined_at = 0.0
        root.trickle = self.activate(self.root, 0.0)

    def deliver(self, sender: int, receiver: int, now: float) -> None:
        dio = DioMessage(sender, self.nodes[sender].rank)
        node = self.nodes[receiver]
        if not node.joined:
            node.rank = dio.rank + 1
            node.preferred_parent = sender
            node.joined_at = now
            self.log.record(now, receiver, "join", sender, node.rank)
            node.trickle = self.activate(receiver, now)
            return
        offered = dio.rank + 1
        improves = offered < node.rank
        if improves:
            # Either a strictly better parent, or our own parent moved closer to the root.
            node.rank = offered
            node.preferred_parent = sender
            self.log.record(now, receiver, "parent_change", sender, offered)
            self.reset(receiver, now)
        else:
            on_hear_consistent(node.trickle)

    def outcome(self) -> RoutingOutcome:
        return RoutingOutcome(
            root=self.root,
            ranks=[s.rank for s in self.nodes],
            parents=[s.preferred_parent for s in self.nodes],
            joined_at=[s.joined_at for s in self.nodes],
        )

    def run(self) -> EventLog:
        result = super().run()
        result.routing = self.outcome()
        return result


@dataclass(frozen=True)
class RplMetrics:
    formation_time: float | None
    mean_dio: float
    dio_per_node: np.ndarray
    stretch: float
    fairness: float
    unjoined: tuple[int, ...]


def network_stretch(ranks: list[int | None], topology: Topology, root: int) -> float:
    """Fraction of non-root nodes whose rank exceeds their hop distance to the root."""
    if topology.n < 2:
        return 0.0
    bfs = topology.bfs_distances(root)
    stretched = 0
    unjoined = []
    for v in range(topology.n):
        if v == root:
            continue
        if ranks[v] is None:
            unjoined.append(v)
            stretched += 1
        elif ranks[v] > bfs[v]:
            stretched += 1
    if unjoined:
        log.warning("%d unjoined node(s) counted as stretched: %s", len(unjoined), unjoined[:10])
    return stretched / (topology.n - 1)


def formation_time(result: EventLog) -> float:
    """Time the last node first joined the DODAG."""
    joined = result.routing.joined_at
    missing = [v for v, t in enumerate(joined) if t is None]
    if missing:
        raise RuntimeError(
            f"DODAG not formed within {result.sim.duration}: {len(missing)} node(s) never joined"
        )
    return max(joined)


@dataclass(frozen=True)
class DioCount:
    per_node: np.ndarray
    mean: float


def dio_count(result: EventLog) -> DioCount:
    """Transmitted DIOs per node; suppressed DIOs are not counted."""
    per_node = result.broadcast_counts()
    return DioCount(per_node=per_node, mean=float(per_node.mean()))


def run_rpl(
    topology: Topology, root: int, params: TrickleParams, sim: SimConfig
) -> tuple[EventLog, RplMetrics]:
    if not topology.is_connected():
        raise ValueError("RPL runs need a connected topology")
    result = RplSimulator(topology, root, params, sim).run()
    routing = result.routing
    unjoined = tuple(v for v, r in enumerate(routing.ranks) if r is None)
    if unjoined:
        log.warning("%d node(s) unreachable within the run", len(unjoined))
    dios = dio_count(result)
    probs = result.node_summary(0.0)["probability"]
    try:
        fairness = fairness_index(probs)
    except ValueError:
        fairness = float("nan")
    metrics = RplMetrics(
        formation_time=None if unjoined else formation_time(result),
        mean_dio=dios.mean,
        dio_per_node=dios.per_node,
        stretch=network_stretch(routing.ranks, topology, root),
        fairness=fairness,
        unjoined=unjoined,
    )
    return result, metrics
