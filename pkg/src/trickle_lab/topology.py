"""Graph families used in the experiments: complete, star and random geometric."""

from __future__ import annotations

import json
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import Any

import numpy as np

MAX_RESAMPLES = 1000
DEGREE_TOLERANCE = 0.25


@dataclass(frozen=True)
class Topology:
    n: int
    adjacency: tuple[tuple[int, ...], ...]
    positions: np.ndarray | None = field(default=None, compare=False)
    radius: float | None = None
    kind: str = "custom"

    def __post_init__(self) -> None:
        if len(self.adjacency) != self.n:
            raise ValueError(f"adjacency has {len(self.adjacency)} rows for n={self.n}")
        for i, nbrs in enumerate(self.adjacency):
            for j in nbrs:
                if j == i:
                    raise ValueError(f"self-loop at node {i}")
                if i not in self.adjacency[j]:
                    raise ValueError(f"asymmetric edge {i}->{j}")

    @classmethod
    def from_edges(cls, n: int, edges, **kwargs) -> Topology:
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for i, j in edges:
            nbrs[i].add(j)
            nbrs[j].add(i)
        return cls(n=n, adjacency=tuple(tuple(sorted(s)) for s in nbrs), **kwargs)

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])

    def degrees(self) -> list[int]:
        return [len(a) for a in self.adjacency]

    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, nbrs in enumerate(self.adjacency) for j in nbrs if i < j]

    @property
    def num_edges(self) -> int:
        return sum(self.degrees()) // 2

    @property
    def average_degree(self) -> float:
        return sum(self.degrees()) / self.n

    def bfs_distances(self, root: int) -> list[int | None]:
        dist: list[int | None] = [None] * self.n
        dist[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in self.adjacency[u]:
                if dist[v] is None:
                    dist[v] = dist[u] + 1
                    queue.append(v)
        return dist

    def is_connected(self) -> bool:
        return self.n == 0 or all(d is not None for d in self.bfs_distances(0))

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "n": self.n,
            "radius": self.radius,
            "positions": None if self.positions is None else self.positions.tolist(),
            "edges": [list(e) for e in self.edges()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> Topology:
        positions = doc.get("positions")
        return cls.from_edges(
            doc["n"],
            doc["edges"],
            positions=None if positions is None else np.asarray(positions, dtype=float),
            radius=doc.get("radius"),
            kind=doc.get("kind", "custom"),
        )


def single_cell(n: int) -> Topology:
    if n < 1:
        raise ValueError("single_cell needs n >= 1")
    adjacency = tuple(tuple(j for j in range(n) if j != i) for i in range(n))
    return Topology(n=n, adjacency=adjacency, kind="single_cell")


def star(n: int) -> Topology:
    """Hub ``0`` joined to ``n`` leaves ``1..n``."""
    if n < 1:
        raise ValueError("star needs at least one leaf")
    adjacency = (tuple(range(1, n + 1)),) + tuple((0,) for _ in range(n))
    return Topology(n=n + 1, adjacency=adjacency, kind="star")


def _pairwise_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt((diff**2).sum(axis=-1))


def _realized_degree(dist: np.ndarray, radius: float) -> float:
    n = dist.shape[0]
    adj = (dist <= radius) & (dist > 0)
    return adj.sum() / n


def _calibrate_radius(dist: np.ndarray, target: float, side: float) -> float | None:
    lo, hi = 0.0, side * np.sqrt(2.0) + 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        realized = _realized_degree(dist, mid)
        if abs(realized - target) <= DEGREE_TOLERANCE:
            return mid
        if realized < target:
            lo = mid
        else:
            hi = mid
    return None


def random_geometric(
    n: int, target_avg_degree: float, seed: int, side: float = 100.0
) -> Topology:
    """Uniform points in ``[0, side]^2`` linked within a calibrated radius.

    The radius is bisected until the realized average degree is within 0.25
    of the target. Disconnected draws are discarded and positions are redrawn
    from the next sub-seed.
    """
    if n < 2:
        raise ValueError("random_geometric needs n >= 2")
    if not 0 < target_avg_degree <= n - 1:
        raise ValueError(f"target_avg_degree must lie in (0, {n - 1}], got {target_avg_degree}")
    for attempt in range(MAX_RESAMPLES):
        rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(attempt,)))
        positions = rng.uniform(0.0, side, size=(n, 2))
        dist = _pairwise_distances(positions)
        radius = _calibrate_radius(dist, target_avg_degree, side)
        if radius is None:
            continue
        adj = (dist <= radius) & (dist > 0)
        adjacency = tuple(tuple(int(j) for j in np.flatnonzero(row)) for row in adj)
        topo = Topology(n=n, adjacency=adjacency, positions=positions, radius=float(radius), kind="random_geometric")
        if topo.is_connected():
            return topo
    raise RuntimeError(
        f"no connected geometric graph with n={n}, average degree {target_avg_degree} "
        f"after {MAX_RESAMPLES} draws"
    )


def degree_histogram(topology: Topology) -> dict[int, int]:
    return dict(sorted(Counter(topology.degrees()).items()))


@dataclass(frozen=True)
class TopologySpec:
    """Recipe for building a topology from a seed; ``n`` counts leaves for a star."""

    kind: str
    n: int
    avg_degree: float | None = None
    side: float = 100.0

    def __post_init__(self) -> None:
        if self.kind not in ("single_cell", "star", "random_geometric"):
            raise ValueError(f"unknown topology kind {self.kind!r}")
        if self.kind == "random_geometric" and self.avg_degree is None:
            raise ValueError("random_geometric topologies need avg_degree")

    def build(self, seed: int) -> Topology:
        if self.kind == "single_cell":
            return single_cell(self.n)
        if self.kind == "star":
            return star(self.n)
        return random_geometric(self.n, self.avg_degree, seed=seed, side=self.side)
