"""Reduce event logs to per-degree statistics, window counts and fairness."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .analysis import fixed_k_probability_estimate
from .engine import EventLog
from .topology import Topology
from .trickle import Adaptive


@dataclass(frozen=True)
class DegreeStat:
    nodes: int
    mean: float
    stderr: float
    replications: int


@dataclass
class DegreeProfile:
    """One statistic aggregated per node degree.

    ``mean`` pools nodes of a degree across all replications; ``stderr`` is
    the spread of the per-replication degree means (NaN with one replication).
    """

    statistic: str
    rows: dict[int, DegreeStat] = field(default_factory=dict)

    def degrees(self) -> list[int]:
        return sorted(self.rows)

    def means(self) -> dict[int, float]:
        return {d: self.rows[d].mean for d in self.degrees()}


def _topologies(logs: Sequence[EventLog], topologies: Sequence[Topology] | None) -> list[Topology]:
    if topologies is None:
        return [log.topology for log in logs]
    if len(topologies) != len(logs):
        raise ValueError("logs and topologies must correspond pairwise")
    return list(topologies)


def _aggregate(statistic: str, per_rep: Iterable[tuple[list[int], np.ndarray]]) -> DegreeProfile:
    pooled: dict[int, list[float]] = defaultdict(list)
    rep_means: dict[int, list[float]] = defaultdict(list)
    for degrees, values in per_rep:
        by_degree: dict[int, list[float]] = defaultdict(list)
        for d, v in zip(degrees, values):
            if v == v:
                by_degree[d].append(float(v))
        for d, vs in by_degree.items():
            pooled[d].extend(vs)
            rep_means[d].append(float(np.mean(vs)))
    profile = DegreeProfile(statistic)
    for d in sorted(pooled):
        means = rep_means[d]
        stderr = float(np.std(means, ddof=1) / np.sqrt(len(means))) if len(means) > 1 else float("nan")
        profile.rows[d] = DegreeStat(
            nodes=len(pooled[d]), mean=float(np.mean(pooled[d])), stderr=stderr, replications=len(means)
        )
    return profile


def broadcast_probability_per_degree(
    logs: Sequence[EventLog],
    topologies: Sequence[Topology] | None = None,
    warmup: float | None = None,
) -> DegreeProfile:
    """Fraction of post-warmup intervals in which nodes of each degree broadcast."""
    topologies = _topologies(logs, topologies)
    return _aggregate(
        "broadcast_probability",
        ((topo.degrees(), log.node_summary(warmup)["probability"]) for log, topo in zip(logs, topologies)),
    )


def mean_k_per_degree(
    logs: Sequence[EventLog],
    topologies: Sequence[Topology] | None = None,
    warmup: float | None = None,
) -> DegreeProfile:
    """Time-averaged redundancy constant per degree; adaptive runs only."""
    for log in logs:
        if not isinstance(log.params.policy, Adaptive):
            raise ValueError("mean k per degree is only defined for adaptive-policy runs")
    topologies = _topologies(logs, topologies)
    return _aggregate(
        "mean_k",
        ((topo.degrees(), log.node_summary(warmup)["mean_k"]) for log, topo in zip(logs, topologies)),
    )


def per_node_probabilities(log: EventLog, warmup: float | None = None) -> np.ndarray:
    return log.node_summary(warmup)["probability"]


@dataclass(frozen=True)
class WindowCounts:
    window: float
    counts: np.ndarray

    @property
    def mean(self) -> float:
        return float(self.counts.mean())

    def distribution(self) -> dict[int, int]:
        values, freq = np.unique(self.counts, return_counts=True)
        return {int(v): int(f) for v, f in zip(values, freq)}


def broadcasts_per_interval(log: EventLog, warmup: float | None = None) -> WindowCounts:
    """Network-wide broadcast counts in consecutive windows of length ``i_max``.

    Windows start at the warmup time; only windows that end by the run's
    duration are counted.
    """
    w = log.warmup if warmup is None else warmup
    width = log.params.i_max
    n_windows = int(np.floor((log.sim.duration - w) / width + 1e-9))
    if n_windows <= 0:
        raise ValueError("no complete post-warmup window to count")
    d = log.decisions
    times = d.time[d.fired]
    idx = np.floor((times - w) / width).astype(np.int64)
    idx = idx[(times >= w) & (idx < n_windows)]
    return WindowCounts(window=width, counts=np.bincount(idx, minlength=n_windows))


def fairness_index(probabilities: Sequence[float] | np.ndarray) -> float:
    """Jain's index ``(sum p)^2 / (n * sum p^2)``; NaN entries are dropped."""
    p = np.asarray(probabilities, dtype=float)
    p = p[~np.isnan(p)]
    if p.size == 0:
        raise ValueError("fairness index of an empty vector")
    top = float(np.max(np.abs(p)))
    if top == 0.0:
        raise ValueError("fairness index is undefined when every value is zero")
    # scale-invariant; normalizing keeps tiny values from underflowing when squared
    p = p / top
    return float(p.sum() ** 2 / (p.size * np.sum(p * p)))


def degree_slope(logs: Sequence[EventLog], warmup: float | None = None) -> float:
    """Least-squares slope of per-node mean k against node degree, pooled over runs."""
    xs: list[float] = []
    ys: list[float] = []
    for log in logs:
        mean_k = log.node_summary(warmup)["mean_k"]
        for d, v in zip(log.topology.degrees(), mean_k):
            if v == v:
                xs.append(d)
                ys.append(v)
    slope, _ = np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)
    return float(slope)


def estimator_error(profile: DegreeProfile, k: int) -> float:
    """Mean absolute gap between a profile and ``min(1, k/(N+1))`` over its degrees."""
    gaps = [abs(stat.mean - fixed_k_probability_estimate(k, d)) for d, stat in profile.rows.items()]
    return float(np.mean(gaps))
