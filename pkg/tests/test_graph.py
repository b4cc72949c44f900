import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from queuesolve import graph as G


def test_path3_edges_and_degrees():
    g = G.path(3)
    assert g.edges == ((0, 1, 1.0), (1, 2, 1.0))
    assert list(g.degrees) == [1, 2, 1]


def test_complete4():
    g = G.complete(4)
    assert g.m == 6
    assert np.all(g.degrees == 3)


def test_star5_center_and_leaves():
    g = G.star(5)
    assert g.degrees[0] == 4
    assert np.all(g.degrees[1:] == 1)


def test_grid_and_tree_shapes():
    g = G.grid(3, 4)
    assert g.n == 12 and g.m == 3 * 3 + 2 * 4
    t = G.binary_tree(7)
    assert t.m == 6 and t.degrees[0] == 2


def test_laplacian_examples():
    assert np.array_equal(G.laplacian(G.path(2)), [[1, -1], [-1, 1]])
    L = G.laplacian(G.path(3))
    assert np.array_equal(np.diag(L), [1, 2, 1])
    assert L[0, 1] == L[1, 2] == -1 and L[0, 2] == 0
    w = G.WeightedGraph.from_edges(2, [(0, 1, 3.0)])
    assert np.array_equal(G.laplacian(w), [[3, -3], [-3, 3]])


def test_transition_examples():
    assert np.array_equal(G.transition_matrix(G.path(2)), [[0, 1], [1, 0]])
    assert np.allclose(G.transition_matrix(G.path(3))[1], [0.5, 0, 0.5])
    assert np.array_equal(G.transition_matrix(G.star(3))[1], [1, 0, 0])


def test_validate_one_sink_examples():
    s = G.validate_one_sink([1, -1])
    assert s.sink == 1 and list(s.J) == [1, -1]
    s = G.validate_one_sink([2, 1, -3])
    assert s.sink == 2
    assert np.allclose(s.J, [2 / 3, 1 / 3, -1])
    assert s.sources == {0, 1}
    with pytest.raises(G.OneSinkError, match="exactly one negative"):
        G.validate_one_sink([1, -0.5, -0.5])


@pytest.mark.parametrize("b", [[1, 1, 1], [1, 0, -2], [0, 0, 0]])
def test_validate_one_sink_rejects(b):
    with pytest.raises(G.OneSinkError):
        G.validate_one_sink(b)


def test_construction_errors():
    with pytest.raises(G.GraphError, match="self-loop"):
        G.WeightedGraph.from_edges(2, [(0, 0, 1)])
    with pytest.raises(G.GraphError, match="duplicate"):
        G.WeightedGraph.from_edges(2, [(0, 1, 1), (1, 0, 1)])
    with pytest.raises(G.GraphError, match="non-positive"):
        G.WeightedGraph.from_edges(2, [(0, 1, 0)])
    with pytest.raises(G.GraphError, match="isolated|connected"):
        G.WeightedGraph.from_edges(3, [(0, 1, 1)])
    with pytest.raises(G.GraphError, match="not connected"):
        G.WeightedGraph.from_edges(4, [(0, 1, 1), (2, 3, 1)])


def test_build_generator_dispatch_and_errors():
    assert G.build_generator("path", 4).m == 3
    with pytest.raises(G.GraphError):
        G.build_generator("ramanujan", 4)
    with pytest.raises(G.GraphError):
        G.build_generator("erdos_renyi", 5, 0.5)
    with pytest.raises(G.GraphError):
        G.erdos_renyi(5, 1.5, seed=0)


def test_erdos_renyi_is_connected_and_seeded():
    a = G.erdos_renyi(12, 0.3, seed=4)
    b = G.erdos_renyi(12, 0.3, seed=4)
    assert a.edges == b.edges
    assert np.all(a.bfs_distances(0) >= 0)


def test_erdos_renyi_retry_budget():
    with pytest.raises(G.GenerationError):
        G.erdos_renyi(30, 0.01, seed=1, max_retries=3)


def test_edge_list_roundtrip(tmp_path):
    g = G.WeightedGraph.from_edges(3, [(0, 1, 2.5), (1, 2, 1.0)])
    p = tmp_path / "g.txt"
    p.write_text(g.to_edge_list())
    assert G.read_edge_list(p).edges == g.edges
    assert G.read_edge_list(io.StringIO("2 1\n0 1 1\n")).n == 2
    with pytest.raises(G.GraphError, match="declares"):
        G.read_edge_list(io.StringIO("2 2\n0 1 1\n"))


def test_subgraph_relabels():
    g = G.path(5)
    sub, order = g.subgraph([3, 1, 2])
    assert order == [1, 2, 3]
    assert sub.edges == ((0, 1, 1.0), (1, 2, 1.0))


def test_cumulative_transitions_end_at_one():
    g = G.WeightedGraph.from_edges(4, [(0, 1, 0.1), (0, 2, 0.2), (0, 3, 0.7), (1, 2, 1)])
    cum = g.cumulative_transitions()
    for u in range(g.n):
        assert cum[g.indptr[u + 1] - 1] == 1.0


def test_diameter():
    assert G.path(6).diameter() == 5
    assert G.complete(5).diameter() == 1
    assert G.grid(4).diameter() == 6


weighted_graphs = st.builds(
    lambda n, p, seed, w: G.erdos_renyi(n, p, seed=seed, weight=w),
    st.integers(2, 12), st.floats(0.4, 1.0), st.integers(0, 10_000), st.sampled_from([1.0, 0.3, 2.5]),
)


@settings(max_examples=60, deadline=None)
@given(weighted_graphs)
def test_generated_graph_invariants(g):
    total_w = sum(w for _, _, w in g.edges)
    assert np.isclose(g.degrees.sum(), 2 * total_w)
    assert g.d_max == g.degrees.max() and g.d_min == g.degrees.min()
    L = G.laplacian(g)
    assert np.allclose(L, L.T)
    assert np.abs(L @ np.ones(g.n)).max() <= 1e-12
    P = G.transition_matrix(g)
    assert np.abs(P.sum(axis=1) - 1).max() <= 1e-12


@pytest.mark.parametrize("g", [G.path(5), G.star(6), G.grid(3), G.complete(4), G.binary_tree(9)])
def test_integer_laplacian_rows_are_exactly_zero(g):
    assert np.all(G.laplacian(g) @ np.ones(g.n) == 0)
