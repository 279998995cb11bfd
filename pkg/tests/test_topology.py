import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trickle_lab.topology import (
    Topology,
    TopologySpec,
    degree_histogram,
    random_geometric,
    single_cell,
    star,
)


def test_single_cell_is_complete():
    topo = single_cell(6)
    assert topo.degrees() == [5] * 6
    assert topo.num_edges == 15
    assert topo.is_connected()


def test_star_layout():
    topo = star(4)
    assert topo.n == 5
    assert topo.degrees() == [4, 1, 1, 1, 1]
    assert topo.bfs_distances(1) == [1, 0, 2, 2, 2]


def test_rejects_asymmetric_or_self_loops():
    with pytest.raises(ValueError):
        Topology(n=2, adjacency=((1,), ()))
    with pytest.raises(ValueError):
        Topology(n=1, adjacency=((0,),))


def test_disconnected_bfs():
    topo = Topology.from_edges(4, [(0, 1), (2, 3)])
    assert not topo.is_connected()
    assert topo.bfs_distances(0) == [0, 1, None, None]


def test_two_node_geometric_graph():
    topo = random_geometric(2, 1, seed=0)
    assert topo.degrees() == [1, 1]


@pytest.mark.parametrize("n,target", [(1, 1), (10, 0), (10, 10)])
def test_geometric_preconditions(n, target):
    with pytest.raises(ValueError):
        random_geometric(n, target, seed=0)


@settings(max_examples=15, deadline=None)
@given(st.integers(20, 100), st.floats(5.0, 15.0), st.integers(0, 2**63))
def test_geometric_graph_properties(n, target, seed):
    target = min(target, n - 1)
    topo = random_geometric(n, target, seed=seed)
    assert abs(topo.average_degree - target) <= 0.25
    assert topo.is_connected()
    # brute-force unit-disk oracle
    pos = topo.positions
    for i in range(n):
        expected = tuple(j for j in range(n) if j != i and math.dist(pos[i], pos[j]) <= topo.radius)
        assert topo.adjacency[i] == expected


def test_sparse_graph_gives_up():
    # connected draws at this density are vanishingly rare
    with pytest.raises(RuntimeError):
        random_geometric(120, 1.5, seed=0)


def test_geometric_is_seed_deterministic():
    a = random_geometric(80, 8, seed=42)
    b = random_geometric(80, 8, seed=42)
    c = random_geometric(80, 8, seed=43)
    assert a.adjacency == b.adjacency
    assert a.adjacency != c.adjacency


def test_json_round_trip():
    topo = random_geometric(30, 5, seed=1)
    back = Topology.from_dict(json.loads(topo.to_json()))
    assert back.adjacency == topo.adjacency
    assert back.radius == topo.radius


def test_degree_histogram():
    assert degree_histogram(star(3)) == {1: 3, 3: 1}


def test_spec_builds():
    assert TopologySpec("star", 7).build(0).n == 8
    assert TopologySpec("single_cell", 4).build(0).n == 4
    with pytest.raises(ValueError):
        TopologySpec("random_geometric", 10)
    with pytest.raises(ValueError):
        TopologySpec("ring", 10)
