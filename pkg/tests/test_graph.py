import itertools
from collections import deque

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gossipsa.graph import (
    GraphError,
    NotStronglyConnected,
    build_digraph,
    format_graph,
    is_strongly_connected,
    random_strongly_connected,
    read_graph,
    require_strongly_connected,
    strongly_connected_components,
    write_graph,
)


def reachable(n, edges, s):
    seen = {s}
    q = deque([s])
    while q:
        u = q.popleft()
        for a, b in edges:
            if a == u and b not in seen:
                seen.add(b)
                q.append(b)
    return seen


def bfs_strongly_connected(n, edges):
    return all(len(reachable(n, edges, s)) == n for s in range(1, n + 1))


def test_two_ring():
    g = build_digraph(2, [(1, 2), (2, 1)])
    assert g.out(1) == (2,) and g.in_(1) == (2,)
    assert is_strongly_connected(g)


def test_chain_is_valid_but_not_strongly_connected():
    g = build_digraph(3, [(1, 2), (2, 3)])
    assert len(g.edges) == 2
    assert not is_strongly_connected(g)
    with pytest.raises(NotStronglyConnected):
        require_strongly_connected(g)


def test_single_node():
    assert is_strongly_connected(build_digraph(1, []))


@pytest.mark.parametrize(
    "n, edges",
    [(2, [(1, 1)]), (2, [(1, 3)]), (2, [(0, 1)]), (0, [])],
)
def test_invalid_graphs(n, edges):
    with pytest.raises(GraphError):
        build_digraph(n, edges)


def test_duplicate_edges_collapse():
    g = build_digraph(2, [(1, 2), (1, 2), (2, 1)])
    assert len(g.edges) == 2


def test_connectivity_matches_bfs_oracle():
    rng = np.random.default_rng(0)
    checked = 0
    while checked < 10_000:
        n = int(rng.integers(1, 7))
        pairs = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1) if i != j]
        keep = rng.random(len(pairs)) < rng.uniform(0.1, 0.9)
        edges = [e for e, k in zip(pairs, keep) if k]
        g = build_digraph(n, edges)
        assert is_strongly_connected(g) == bfs_strongly_connected(n, edges)
        checked += 1


def test_components_partition_nodes():
    g = build_digraph(5, [(1, 2), (2, 1), (3, 4), (4, 5), (5, 3), (2, 3)])
    comps = sorted(sorted(c) for c in strongly_connected_components(5, g.out_idx))
    assert comps == [[0, 1], [2, 3, 4]]


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 12), st.floats(0.3, 1.0), st.integers(0, 2**31))
def test_random_generator_is_strongly_connected(n, density, seed):
    g = random_strongly_connected(n, density, seed)
    assert g.n_nodes == n
    assert bfs_strongly_connected(n, g.sorted_edges())


def test_random_generator_rejects_hopeless_density():
    with pytest.raises(GraphError):
        random_strongly_connected(6, 0.0, 1)
    with pytest.raises(GraphError):
        random_strongly_connected(12, 0.01, 1, max_attempts=20)


def test_random_generator_is_seeded():
    assert random_strongly_connected(8, 0.3, 5).edges == random_strongly_connected(8, 0.3, 5).edges


def test_file_round_trip(tmp_path):
    g = random_strongly_connected(6, 0.4, 1)
    path = tmp_path / "g.txt"
    write_graph(g, path, header="seed 1")
    h = read_graph(path)
    assert h.n_nodes == g.n_nodes and h.edges == g.edges
    assert format_graph(h) == format_graph(g)


def test_read_graph_rejects_garbage(tmp_path):
    path = tmp_path / "g.txt"
    path.write_text("3\n1 2\n2 x\n")
    with pytest.raises(GraphError):
        read_graph(path)


def test_adjacency():
    g = build_digraph(3, [(1, 2), (2, 3), (3, 1)])
    A = g.adjacency()
    assert A.sum() == 3 and A[0, 1] == 1 and A[2, 0] == 1
    assert [e for e in itertools.chain(g.sorted_edges())] == [(1, 2), (2, 3), (3, 1)]
