"""Oracle checks. Reference values were computed independently (pseudo-inverse,
``numpy.linalg.eigvalsh``, or by hand with fractions) and frozen here."""

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from queuesolve import graph as G
from queuesolve import oracle as O

SUITE = {
    "edge": G.path(2), "P3": G.path(3), "P10": G.path(10), "K3": G.complete(3),
    "K5": G.complete(5), "star6": G.star(6), "grid4": G.grid(4),
}


def endpoints(n):
    b = np.zeros(n)
    b[0], b[-1] = 1.0, -1.0
    return G.validate_one_sink(b)


def test_exact_solve_examples():
    assert np.allclose(O.exact_solve(G.path(2), G.validate_one_sink([1, -1])).x, [1, 0])
    assert np.allclose(O.exact_solve(G.path(3), G.validate_one_sink([1, 0, -1])).x, [2, 1, 0])
    assert np.allclose(O.exact_solve(G.complete(3), G.validate_one_sink([1, 0, -1])).x, [2 / 3, 1 / 3, 0])


@pytest.mark.parametrize("name", SUITE)
def test_exact_solve_residual(name):
    g = SUITE[name]
    s = endpoints(g.n)
    sol = O.exact_solve(g, s)
    assert sol.x[s.sink] == 0
    r = sol.x @ G.laplacian(g) - s.b
    assert np.abs(r).max() <= 1e-9 * np.abs(s.b).max()


def test_exact_solve_general_b_pins():
    g = G.cycle(4)
    b = np.array([1.0, 1.0, -1.0, -1.0])
    x = O.exact_solve(g, b, pin=0).x
    assert x[0] == 0
    assert np.allclose(x @ G.laplacian(g), b)
    assert abs(O.canonical_exact(g, b).sum()) < 1e-12


def test_solve_dense_matches_numpy():
    rng = np.random.default_rng(3)
    A = rng.normal(size=(9, 9)) + 9 * np.eye(9)
    b = rng.normal(size=9)
    assert np.allclose(O.solve_dense(A, b), np.linalg.solve(A, b))
    with pytest.raises(O.SingularSystemError):
        O.solve_dense(np.zeros((2, 2)), [1, 1])


def test_exact_occupancy_examples():
    occ = O.exact_occupancy(G.path(2), 1, [1, -1], 0.5)
    assert np.allclose(occ.eta, [0.5, 0])
    # hand elimination: eta0 - eta1/2 = beta, eta1 = eta0  =>  eta0 = eta1 = 2 beta
    occ = O.exact_occupancy(G.path(3), 2, [1, 0, -1], 0.25)
    assert np.allclose(occ.eta, [0.5, 0.5, 0])
    assert not occ.unstable
    assert np.all(O.exact_occupancy(G.grid(3), 8, endpoints(9).J, 0.0).eta == 0)


def test_occupancy_flags_instability():
    assert O.exact_occupancy(G.path(3), 2, [1, 0, -1], 0.5).unstable


def test_exact_occupancy_satisfies_balance():
    g = G.grid(3)
    s = endpoints(g.n)
    eta = O.exact_occupancy(g, s.sink, s.J, 0.05).eta
    lhs = eta @ (np.eye(g.n) - G.transition_matrix(g))
    keep = np.arange(g.n) != s.sink
    assert np.allclose(lhs[keep], 0.05 * s.J[keep])


def test_exact_beta_star_examples():
    assert O.exact_beta_star(G.path(2), 1, [1, -1]) == pytest.approx(1.0)
    assert O.exact_beta_star(G.star(3), 0, [-1, 0.5, 0.5]) == pytest.approx(2.0)
    assert O.exact_beta_star(G.path(3), 2, [1, 0, -1]) == pytest.approx(0.5)


@pytest.mark.parametrize("name", SUITE)
def test_beta_star_is_critical(name):
    g = SUITE[name]
    s = endpoints(g.n)
    bs = O.exact_beta_star(g, s.sink, s.J)
    occ = O.exact_occupancy(g, s.sink, s.J, 0.9 * bs)
    assert occ.max == pytest.approx(0.9)


@pytest.mark.parametrize("name", SUITE)
def test_spectral_rate_bound_holds(name):
    g = SUITE[name]
    s = endpoints(g.n)
    assert O.exact_beta_star(g, s.sink, s.J) >= O.spectral_rate_bound(g, s.sink, s.J)


def test_occupancy_linear_in_beta():
    g = G.complete(5)
    s = endpoints(5)
    a = O.exact_occupancy(g, s.sink, s.J, 0.1).eta
    b = O.exact_occupancy(g, s.sink, s.J, 0.3).eta
    assert np.allclose(b, 3 * a, atol=1e-9)


@pytest.mark.parametrize("name", SUITE)
def test_solution_is_occupancy_over_degree(name):
    g = SUITE[name]
    s = endpoints(g.n)
    beta = 0.01
    x = O.exact_solve(g, s.J * 1.0).x
    eta = O.exact_occupancy(g, s.sink, s.J, beta).eta
    assert np.allclose(beta * x, eta / g.degrees, atol=1e-9)


def test_hitting_time_examples():
    assert np.allclose(O.hitting_times(G.path(2), 1), [1, 0])
    assert np.allclose(O.hitting_times(G.path(3), 2), [4, 3, 0])
    h = O.hitting_times(G.complete(4), 0)
    assert np.allclose(h[1:], 3)
    assert O.worst_hitting_time(G.path(10)) == pytest.approx(81)


def test_effective_resistance_examples():
    assert O.effective_resistance_exact(G.path(2), 0, 1) == pytest.approx(1)
    assert O.effective_resistance_exact(G.path(3), 0, 2) == pytest.approx(2)
    assert O.effective_resistance_exact(G.complete(3), 0, 1) == pytest.approx(2 / 3)
    assert O.effective_resistance_exact(G.complete(3), 1, 1) == 0


def test_resistance_series_parallel():
    series = G.WeightedGraph.from_edges(3, [(0, 1, 2.0), (1, 2, 0.5)])
    assert O.effective_resistance_exact(series, 0, 2) == pytest.approx(0.5 + 2.0)
    # two parallel paths of resistance 2 and 1 between 0 and 3
    par = G.WeightedGraph.from_edges(4, [(0, 1, 1), (1, 3, 1), (0, 2, 2), (2, 3, 2)])
    assert O.effective_resistance_exact(par, 0, 3) == pytest.approx(1 / (1 / 2 + 1 / 1))


@settings(max_examples=30, deadline=None)
@given(st.integers(3, 9), st.integers(0, 1000))
def test_resistance_triangle_inequality(n, seed):
    g = G.erdos_renyi(n, 0.6, seed=seed)
    R = np.array([[O.effective_resistance_exact(g, u, v) for v in range(n)] for u in range(n)])
    assert np.allclose(R, R.T)
    for w in range(n):
        assert np.all(R <= R[:, [w]] + R[[w], :] + 1e-9)


def test_lambda2_examples():
    assert O.lambda2(G.laplacian(G.path(2))) == pytest.approx(2)
    assert O.lambda2(G.laplacian(G.complete(3))) == pytest.approx(3)
    assert O.lambda2(G.laplacian(G.path(3))) == pytest.approx(1)


def test_jacobi_matches_reference():
    rng = np.random.default_rng(0)
    for n in range(2, 25):
        M = rng.normal(size=(n, n))
        M[rng.random((n, n)) < 0.5] = 0
        M = M + M.T
        assert np.allclose(O.jacobi_eigenvalues(M), np.linalg.eigvalsh(M), atol=1e-10)
    for g in SUITE.values():
        L = G.laplacian(g)
        assert O.lambda2(L) == pytest.approx(np.linalg.eigvalsh(L)[1], abs=1e-10)


def test_spanning_tree_examples():
    assert O.spanning_tree_count(G.complete(3)) == 3
    assert O.spanning_tree_count(G.cycle(4)) == 4
    assert O.spanning_tree_count(G.complete(5)) == 125
    t = G.binary_tree(6)
    assert O.spanning_tree_count(t) == 1
    assert O.enumerate_spanning_trees(t) == [tuple((u, v) for u, v, _ in t.edges)]


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.floats(0.3, 1.0), st.integers(0, 10_000))
def test_count_matches_enumeration(n, p, seed):
    g = G.erdos_renyi(n, p, seed=seed)
    assume(g.m <= 16)
    trees = O.enumerate_spanning_trees(g)
    assert len(trees) == O.spanning_tree_count(g)
    assert len(set(trees)) == len(trees)


def test_enumeration_cap():
    with pytest.raises(ValueError):
        O.enumerate_spanning_trees(G.complete(9))
