"""Exact desk-scale references: direct solves, occupancies, hitting times, spectra
and spanning-tree counts.

Everything here is dense and cubic; it is meant for graphs of at most a few
hundred vertices and serves as ground truth for the simulated solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import OneSinkSystem, WeightedGraph, laplacian, transition_matrix


class SingularSystemError(RuntimeError):
    pass


def solve_dense(A, b) -> np.ndarray:
    """Gaussian elimination with partial pivoting."""
    A = np.array(A, dtype=np.float64)
    b = np.array(b, dtype=np.float64)
    n = len(b)
    if A.shape != (n, n):
        raise ValueError("shape mismatch")
    scale = np.abs(A).max() if n else 1.0
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        if abs(A[p, k]) <= 1e-14 * scale:
            raise SingularSystemError(f"zero pivot in column {k}")
        if p != k:
            A[[k, p]] = A[[p, k]]
            b[[k, p]] = b[[p, k]]
        f = A[k + 1:, k] / A[k, k]
        A[k + 1:, k:] -= np.outer(f, A[k, k:])
        b[k + 1:] -= f * b[k]
    x = np.empty(n)
    for k in range(n - 1, -1, -1):
        x[k] = (b[k] - A[k, k + 1:] @ x[k + 1:]) / A[k, k]
    return x


@dataclass(frozen=True)
class ExactSolution:
    x: np.ndarray
    method: str


def exact_solve(graph: WeightedGraph, b, pin: int | None = None) -> ExactSolution:
    """Solve ``x^T L = b^T`` with ``x[pin] = 0``.

    ``b`` may be a :class:`OneSinkSystem` (pinned at its sink) or any vector
    summing to zero (pinned at ``pin``, default the last vertex).
    """
    if isinstance(b, OneSinkSystem):
        pin = b.sink if pin is None else pin
        b = b.b
    b = np.asarray(b, dtype=np.float64)
    if len(b) != graph.n:
        raise ValueError("b has wrong length")
    if abs(b.sum()) > 1e-9 * max(1.0, np.abs(b).max()):
        raise ValueError("b must sum to zero")
    if pin is None:
        neg = np.flatnonzero(b < 0)
        pin = int(neg[0]) if len(neg) == 1 else graph.n - 1
    keep = np.arange(graph.n) != pin
    L = laplacian(graph)
    x = np.zeros(graph.n)
    x[keep] = solve_dense(L[np.ix_(keep, keep)], b[keep])
    return ExactSolution(x=x, method=f"elimination(pin={pin})")


def canonical_exact(graph: WeightedGraph, b) -> np.ndarray:
    x = exact_solve(graph, b).x
    return x - x.mean()


@dataclass(frozen=True)
class ExactOccupancy:
    eta: np.ndarray
    beta: float

    @property
    def unstable(self) -> bool:
        return bool(np.any(self.eta >= 1.0))

    @property
    def max(self) -> float:
        return float(self.eta.max())


def exact_occupancy(graph: WeightedGraph, sink: int, J, beta: float) -> ExactOccupancy:
    """Stationary queue-occupancy vector solving ``eta^T (I - P) = beta J^T``."""
    J = np.asarray(J, dtype=np.float64)
    n = graph.n
    keep = np.arange(n) != sink
    M = (np.eye(n) - transition_matrix(graph)).T
    eta = np.zeros(n)
    if beta != 0:
        eta[keep] = solve_dense(M[np.ix_(keep, keep)], beta * J[keep])
    return ExactOccupancy(eta=eta, beta=float(beta))


def spectral_rate_bound(graph: WeightedGraph, sink: int, J) -> float:
    """Lower bound ``lambda_2 / (2 d_max sum_{v != sink} J_v)`` on the critical rate."""
    J = np.asarray(J, dtype=np.float64)
    total = float(np.delete(J, sink).sum())
    return lambda2(laplacian(graph)) / (2.0 * graph.d_max * total)


def exact_beta_star(graph: WeightedGraph, sink: int, J) -> float:
    # occupancy is linear in beta, so one stable probe pins the critical rate
    beta0 = min(0.5, spectral_rate_bound(graph, sink, J)) / 2.0
    occ = exact_occupancy(graph, sink, J, beta0)
    return beta0 / occ.max


def hitting_times(graph: WeightedGraph, target: int) -> np.ndarray:
    """Expected steps for the natural walk from each vertex to first reach ``target``."""
    n = graph.n
    keep = np.arange(n) != target
    M = np.eye(n) - transition_matrix(graph)
    h = np.zeros(n)
    h[keep] = solve_dense(M[np.ix_(keep, keep)], np.ones(n - 1))
    return h


def worst_hitting_time(graph: WeightedGraph) -> float:
    return float(max(hitting_times(graph, v).max() for v in range(graph.n)))


def effective_resistance_exact(graph: WeightedGraph, u: int, v: int) -> float:
    if u == v:
        return 0.0
    b = np.zeros(graph.n)
    b[u], b[v] = 1.0, -1.0
    x = exact_solve(graph, b, pin=v).x
    return float(x[u] - x[v])


# -- spectra -------------------------------------------------------------------

def jacobi_eigenvalues(M, tol: float = 1e-12, max_sweeps: int = 100) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending."""
    A = np.array(M, dtype=np.float64)
    n = A.shape[0]
    if n == 1:
        return A.diagonal().copy()
    norm = np.linalg.norm(A) or 1.0
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * norm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-18 * norm:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta == 0:
                    t = 1.0
                elif abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                rp, rq = A[p, :].copy(), A[q, :].copy()
                A[p, :] = c * rp - s * rq
                A[q, :] = s * rp + c * rq
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return np.sort(np.diag(A))


def lambda2(L) -> float:
    """Second-smallest Laplacian eigenvalue (algebraic connectivity)."""
    return float(jacobi_eigenvalues(L)[1])


# -- spanning trees --------------------------------------------------------------

def _bareiss_det(M: list[list[int]]) -> int:
    M = [row[:] for row in M]
    n = len(M)
    sign, prev = 1, 1
    for k in range(n - 1):
        if M[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if M[i][k] != 0), None)
            if swap is None:
                return 0
            M[k], M[swap] = M[swap], M[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                M[i][j] = (M[i][j] * M[k][k] - M[i][k] * M[k][j]) // prev
        prev = M[k][k]
    return sign * M[n - 1][n - 1] if n else 1


def spanning_tree_count(graph: WeightedGraph):
    """Matrix-tree determinant of the reduced Laplacian.

    Exact integer for integer weights (the weighted count otherwise).
    """
    if graph.n == 1:
        return 1
    L = laplacian(graph)[1:, 1:]
    if all(float(w).is_integer() for _, _, w in graph.edges):
        return _bareiss_det([[int(round(v)) for v in row] for row in L])
    return float(np.linalg.det(L))


def enumerate_spanning_trees(graph: WeightedGraph, max_n: int = 8, max_m: int = 16):
    """All spanning trees as sorted tuples of ``(u, v)`` edges, by include/exclude search."""
    if graph.n > max_n or graph.m > max_m:
        raise ValueError(f"enumeration capped at n <= {max_n}, m <= {max_m}")
    edges = [(u, v) for u, v, _ in graph.edges]
    need = graph.n - 1
    out: list[tuple[tuple[int, int], ...]] = []

    def find(parent, a):
        while parent[a] != a:
            a = parent[a]
        return a

    def rec(i, chosen, parent):
        if len(chosen) == need:
            out.append(tuple(chosen))
            return
        if i == len(edges) or len(chosen) + len(edges) - i < need:
            return
        u, v = edges[i]
        ru, rv = find(parent, u), find(parent, v)
        if ru != rv:
            merged = list(parent)
            merged[ru] = rv
            rec(i + 1, chosen + [edges[i]], merged)
        rec(i + 1, chosen, parent)

    rec(0, [], list(range(graph.n)))
    return out
