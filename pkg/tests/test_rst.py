import json
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from queuesolve import graph as G
from queuesolve import oracle as O
from queuesolve import rng
from queuesolve import rst as R
from queuesolve.collection import ConfigurationError
from queuesolve.engine import InvariantError

# start times are max(shift) - shift, so a large shift means an early start
P4_MIDDLE = [4.5, 5.0, 0.0, 4.5]         # {0}, {1, 2}, {3}
P4_HALVES = [3.0, 0.0, 0.0, 3.0]         # {0, 1}, {2, 3}


def test_zero_shifts_give_singletons():
    dec = R.decompose(G.path(4), 0.5, 0, shifts=np.zeros(4))
    assert dec.k == 4 and len(dec.cut_edges) == 3 and dec.diameters == [0] * 4


def test_one_early_start_claims_everything():
    dec = R.decompose(G.path(4), 0.5, 0, shifts=[9.0, 0, 0, 0])
    assert dec.k == 1 and dec.leaders == [0] and dec.cut_edges == []
    assert dec.diameters == [3] and dec.rounds == 4


def test_two_halves():
    dec = R.decompose(G.path(4), 0.5, 0, shifts=P4_HALVES)
    assert [list(m) for m in dec.members] == [[0, 1], [2, 3]]
    assert dec.cut_edges == [(1, 2, 1.0)]


def test_tie_goes_to_lower_leader():
    dec = R.decompose(G.path(3), 0.5, 0, shifts=[1.0, 0.0, 1.0])
    assert list(dec.part) == [0, 0, 1]


def test_decompose_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        R.decompose(G.path(3), 0.0, 0)
    with pytest.raises(ConfigurationError):
        R.decompose(G.path(3), 1.5, 0)
    with pytest.raises(ConfigurationError):
        R.decompose(G.path(3), 0.5, 0, shifts=[1, 2])


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 14), st.floats(0.3, 1.0), st.integers(0, 10_000), st.floats(0.05, 1.0))
def test_decomposition_invariants(n, p, seed, phi):
    g = G.erdos_renyi(n, p, seed=seed)
    dec = R.decompose(g, phi, seed)
    assert sorted(np.concatenate(dec.members).tolist()) == list(range(n))
    for i, verts in enumerate(dec.members):
        assert dec.leaders[i] in verts
        assert np.all(dec.part[verts] == i)
        if len(verts) > 1:
            sub, _ = g.subgraph(verts)      # raises if the cluster is disconnected
            assert sub.diameter() == dec.diameters[i]
    crossing = [(u, v, w) for u, v, w in g.edges if dec.part[u] != dec.part[v]]
    assert dec.cut_edges == crossing
    again = R.decompose(g, phi, seed)
    assert np.array_equal(again.part, dec.part)


def test_grid_decomposition_statistics():
    g = G.grid(8)
    phi = 0.2
    cuts, diams = [], []
    for seed in range(100):
        dec = R.decompose(g, phi, seed)
        cuts.append(len(dec.cut_edges))
        diams.append(max(dec.diameters))
    # measured constant is about 0.38
    assert np.mean(cuts) <= phi * g.m
    assert max(diams) <= 2 * math.log(g.n) / phi


def test_exit_rows_equal_weights():
    g = G.path(3)
    dec = R.decompose(g, 0.5, 0, shifts=np.zeros(3))
    rows = R.exit_distributions(g, dec, 1)
    assert np.allclose(rows.P, [[0.5, 0.5]])


def weighted_star():
    return G.WeightedGraph.from_edges(3, [(0, 1, 1.0), (0, 2, 3.0)])


@pytest.mark.parametrize("direct", [True, False])
def test_exit_rows_weighted_singleton(direct):
    g = weighted_star()
    dec = R.decompose(g, 0.5, 0, shifts=np.zeros(3))
    rows = R.exit_distributions(g, dec, 0, direct_singletons=direct)
    assert [o for _, o, _ in rows.boundary] == [1, 2]
    assert np.allclose(rows.P, [[0.25, 0.75]])


def test_exit_rows_path_middle():
    # walk from 1 leaves left w.p. 1/2 + P_2 / 2 and P_2 = P_1 / 2, so P_1 = 2/3
    g = G.path(4)
    dec = R.decompose(g, 0.5, 0, shifts=P4_MIDDLE)
    assert [list(m) for m in dec.members] == [[0], [1, 2], [3]]
    rows = R.exit_distributions(g, dec, 1)
    assert rows.boundary == [(1, 0, 1.0), (2, 3, 1.0)]
    assert np.allclose(rows.P, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]])
    assert np.allclose(rows.raw_sums, 1, atol=1e-9)


def test_exit_rows_trivial_cases():
    g = G.path(4)
    whole = R.decompose(g, 0.5, 0, shifts=[9.0, 0, 0, 0])
    assert R.exit_distributions(g, whole, 0).P.shape == (4, 0)
    halves = R.decompose(g, 0.5, 0, shifts=P4_HALVES)
    assert np.array_equal(R.exit_distributions(g, halves, 0).P, np.ones((2, 1)))
    with pytest.raises(ValueError):
        R.exit_distributions(g, R.decompose(g, 0.5, 0, shifts=P4_MIDDLE), 1, method="guess")


@pytest.mark.parametrize("seed", range(5))
def test_oracle_exit_raw_sums(seed):
    g = G.grid(5)
    dec = R.decompose(g, 0.4, seed)
    for i in range(dec.k):
        rows = R.exit_distributions(g, dec, i, direct_singletons=False)
        if len(rows.boundary) > 1:
            assert np.allclose(rows.raw_sums, 1, atol=1e-9)
        assert np.allclose(rows.P.sum(axis=1), 1) or rows.P.shape[1] == 0


def test_exit_gadget_shape():
    g = G.path(4)
    dec = R.decompose(g, 0.5, 0, shifts=P4_MIDDLE)
    gadget, b, src = R.exit_gadget(g, dec.members[1], R.boundary_edges(g, dec, 1), 0)
    assert gadget.n == 4 and src == 2
    assert list(b) == [0, 0, 1, -1]
    assert gadget.has_edge(0, 2) and gadget.has_edge(1, 3) and not gadget.has_edge(0, 3)


def test_solver_exit_rows_close_to_oracle():
    g = G.path(4)
    dec = R.decompose(g, 0.5, 0, shifts=P4_MIDDLE)
    rows = R.exit_distributions(g, dec, 1, eps=0.1, seed=1, method="solver")
    assert rows.rounds > 0
    assert np.allclose(rows.P, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], atol=0.08)


def test_spanning_tree_validator():
    g = G.complete(3)
    assert R.SpanningTree.build(3, [(1, 0), (2, 1)], g).edges == ((0, 1), (1, 2))
    with pytest.raises(InvariantError, match="edges"):
        R.SpanningTree.build(3, [(0, 1)])
    with pytest.raises(InvariantError, match="cycle"):
        R.SpanningTree.build(4, [(0, 1), (1, 2), (2, 0)])
    with pytest.raises(InvariantError, match="not a graph edge"):
        R.SpanningTree.build(3, [(0, 1), (0, 2)], G.path(3))


def test_partition_tree_cases():
    g = G.complete(4)
    assert R.partition_tree(g, [2], 0)[0] == []
    tree = G.binary_tree(7)
    edges, _ = R.partition_tree(tree, range(7), 3)
    assert R.SpanningTree.build(7, edges, tree).edges == tuple(sorted((u, v) for u, v, _ in tree.edges))


def test_partition_tree_uniform_on_triangle():
    g = G.complete(3)
    counts = Counter(R.SpanningTree.build(3, R.partition_tree(g, range(3), s)[0]).edges for s in range(3000))
    assert len(counts) == 3
    assert all(abs(c / 3000 - 1 / 3) <= 0.03 for c in counts.values())


def test_aldous_broder_cover_cap():
    with pytest.raises(R.CoverTimeExceeded):
        R.aldous_broder(G.path(30), rng.stream(0, rng.WALK), cap=3)
    t = R.sample_aldous_broder(G.grid(4), 5)
    t.validate(G.grid(4))


def test_reduced_walk_single_cluster():
    g = G.path(4)
    dec = R.decompose(g, 0.5, 0, shifts=[9.0, 0, 0, 0])
    walk = R.reduced_walk(g, dec, [R.exit_distributions(g, dec, 0)], seed=0)
    assert walk.physical == [] and walk.rounds == 0


def test_reduced_walk_two_clusters():
    g = G.path(4)
    dec = R.decompose(g, 0.5, 0, shifts=P4_HALVES)
    table = [R.exit_distributions(g, dec, i) for i in range(2)]
    walk = R.reduced_walk(g, dec, table, seed=2)
    assert walk.super_edges in ([(0, 1)], [(1, 0)])
    assert walk.physical in ([(1, 2)], [(2, 1)])
    assert walk.steps == 1 and walk.rounds == 2


def test_all_singletons_reduce_to_a_physical_walk():
    # with singleton clusters each step is one step of the walk on the graph
    g = G.cycle(5)
    for seed in range(50):
        res = R.sample_rst(g, seed, shifts=np.zeros(5))
        assert res.decomposition.k == 5
        assert len(res.walk.physical) == 4
        res.tree.validate(g)


def test_single_cluster_is_the_partition_tree():
    g = G.grid(3)
    for seed in range(50):
        res = R.sample_rst(g, seed, shifts=[9.0] + [0.0] * 8)
        edges, _ = R.partition_tree(g, range(9), seed, 0)
        assert res.tree == R.SpanningTree.build(9, edges, g)


def test_triangle_tree_frequencies():
    g = G.complete(3)
    counts = Counter(R.sample_rst(g, [s]).tree.edges for s in range(3000))
    assert len(counts) == O.spanning_tree_count(g)
    assert all(abs(c / 3000 - 1 / 3) <= 0.03 for c in counts.values())


@pytest.mark.parametrize("cond", [False, True])
def test_sample_rst_valid_trees(cond):
    g = G.grid(5)
    for seed in range(20):
        res = R.sample_rst(g, seed, phi=0.4, entry_conditioned=cond)
        res.tree.validate(g)
        assert res.rounds >= res.decomposition.rounds


def test_sample_rst_solver_exits():
    g = G.cycle(6)
    res = R.sample_rst(g, 1, phi=0.5, exits="solver", eps=0.2)
    res.tree.validate(g)
    assert res.rounds > 0 and res.model_time == res.rounds * g.d_max


def test_metadata():
    res = R.sample_rst(G.grid(3), [4, 1], phi=0.5)
    meta = json.loads(res.metadata_json())
    assert meta["schema"] == R.SCHEMA and meta["seed"] == [4, 1]
    assert meta["partitions"] == res.decomposition.k
    assert res.metadata_json() == R.sample_rst(G.grid(3), [4, 1], phi=0.5).metadata_json()


def test_sample_rst_rejects_tiny_graph():
    with pytest.raises(ConfigurationError):
        R.sample_rst(G.WeightedGraph.from_edges(1, []), 0)
