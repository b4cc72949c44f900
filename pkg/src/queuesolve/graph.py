"""Weighted undirected graphs, standard generators and one-sink right-hand sides."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as _rng


class GraphError(ValueError):
    """Invalid graph construction or generator parameters."""


class GenerationError(RuntimeError):
    """A random generator could not produce a connected graph."""


class OneSinkError(ValueError):
    """Right-hand side is not a one-sink vector."""


@dataclass(frozen=True, eq=False)
class WeightedGraph:
    """Connected undirected graph on vertices ``0..n-1`` with positive weights.

    ``edges`` holds each edge once as ``(u, v, w)`` with ``u < v``; the
    adjacency view is stored in CSR form (``indptr``, ``indices``,
    ``weights``) with neighbours sorted by id.
    """

    n: int
    edges: tuple[tuple[int, int, float], ...]
    indptr: np.ndarray = field(repr=False)
    indices: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    degrees: np.ndarray = field(repr=False)
    d_max: float
    d_min: float

    @classmethod
    def from_edges(cls, n: int, edges) -> "WeightedGraph":
        n = int(n)
        if n < 1:
            raise GraphError("graph needs at least one vertex")
        seen: dict[tuple[int, int], float] = {}
        for e in edges:
            if len(e) == 2:
                u, v, w = int(e[0]), int(e[1]), 1.0
            else:
                u, v, w = int(e[0]), int(e[1]), float(e[2])
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            if not (w > 0 and np.isfinite(w)):
                raise GraphError(f"edge ({u}, {v}) has non-positive weight {w}")
            key = (min(u, v), max(u, v))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen[key] = w
        canon = tuple(sorted((u, v, w) for (u, v), w in seen.items()))

        adj: list[list[tuple[int, float]]] = [[] for _ in range(n)]
        for u, v, w in canon:
            adj[u].append((v, w))
            adj[v].append((u, w))
        indptr = np.zeros(n + 1, dtype=np.int64)
        for u in range(n):
            adj[u].sort()
            indptr[u + 1] = indptr[u] + len(adj[u])
        indices = np.array([v for row in adj for v, _ in row], dtype=np.int64)
        weights = np.array([w for row in adj for _, w in row], dtype=np.float64)
        degrees = np.array([sum(w for _, w in row) for row in adj], dtype=np.float64)
        if n > 1 and np.any(degrees <= 0):
            raise GraphError("graph has an isolated vertex")
        if not _connected(n, indptr, indices):
            raise GraphError("graph is not connected")
        for a in (indptr, indices, weights, degrees):
            a.setflags(write=False)
        return cls(
            n=n,
            edges=canon,
            indptr=indptr,
            indices=indices,
            weights=weights,
            degrees=degrees,
            d_max=float(degrees.max()) if n > 1 else 0.0,
            d_min=float(degrees.min()) if n > 1 else 0.0,
        )

    @property
    def m(self) -> int:
        return len(self.edges)

    def neighbors(self, u: int) -> np.ndarray:
        return self.indices[self.indptr[u]:self.indptr[u + 1]]

    def neighbor_weights(self, u: int) -> np.ndarray:
        return self.weights[self.indptr[u]:self.indptr[u + 1]]

    def transition_row(self, u: int) -> tuple[np.ndarray, np.ndarray]:
        """Neighbours of ``u`` and the walk probabilities ``w_uv / d_u``."""
        return self.neighbors(u), self.neighbor_weights(u) / self.degrees[u]

    def cumulative_transitions(self) -> np.ndarray:
        """Per-row cumulative transition probabilities aligned with ``indices``.

        The last entry of every row is pinned to exactly 1.0 so inverse-CDF
        sampling with a uniform in [0, 1) always lands inside the row.
        """
        cum = np.empty_like(self.weights)
        for u in range(self.n):
            lo, hi = self.indptr[u], self.indptr[u + 1]
            if hi > lo:
                cum[lo:hi] = np.cumsum(self.weights[lo:hi] / self.degrees[u])
                cum[hi - 1] = 1.0
        return cum

    def weight(self, u: int, v: int) -> float:
        nb = self.neighbors(u)
        k = np.searchsorted(nb, v)
        if k < len(nb) and nb[k] == v:
            return float(self.neighbor_weights(u)[k])
        return 0.0

    def has_edge(self, u: int, v: int) -> bool:
        return self.weight(u, v) > 0

    def bfs_distances(self, source: int, allowed=None) -> np.ndarray:
        """Hop distances from ``source``; -1 marks unreachable vertices."""
        dist = np.full(self.n, -1, dtype=np.int64)
        dist[source] = 0
        queue = deque([source])
        while queue:
            u = queue.popleft()
            for v in self.neighbors(u):
                if dist[v] < 0 and (allowed is None or v in allowed):
                    dist[v] = dist[u] + 1
                    queue.append(int(v))
        return dist

    def diameter(self) -> int:
        return int(max(self.bfs_distances(u).max() for u in range(self.n)))

    def subgraph(self, vertices) -> tuple["WeightedGraph", list[int]]:
        """Induced subgraph, relabelled in the order of ``sorted(vertices)``."""
        verts = sorted(int(v) for v in vertices)
        local = {v: i for i, v in enumerate(verts)}
        edges = [(local[u], local[v], w) for u, v, w in self.edges if u in local and v in local]
        return WeightedGraph.from_edges(len(verts), edges), verts

    def to_edge_list(self) -> str:
        lines = [f"{self.n} {self.m}"]
        lines += [f"{u} {v} {w!r}" for u, v, w in self.edges]
        return "\n".join(lines) + "\n"


def _connected(n: int, indptr: np.ndarray, indices: np.ndarray) -> bool:
    seen = np.zeros(n, dtype=bool)
    seen[0] = True
    stack = [0]
    while stack:
        u = stack.pop()
        for v in indices[indptr[u]:indptr[u + 1]]:
            if not seen[v]:
                seen[v] = True
                stack.append(int(v))
    return bool(seen.all())


def laplacian(graph: WeightedGraph) -> np.ndarray:
    L = np.zeros((graph.n, graph.n))
    for u, v, w in graph.edges:
        L[u, v] -= w
        L[v, u] -= w
    L[np.diag_indices(graph.n)] = graph.degrees
    return L


def adjacency(graph: WeightedGraph) -> np.ndarray:
    A = np.zeros((graph.n, graph.n))
    for u, v, w in graph.edges:
        A[u, v] = A[v, u] = w
    return A


def transition_matrix(graph: WeightedGraph) -> np.ndarray:
    return adjacency(graph) / graph.degrees[:, None]


# -- generators -------------------------------------------------------------

def path(n: int, weight: float = 1.0) -> WeightedGraph:
    if n < 2:
        raise GraphError("path needs n >= 2")
    return WeightedGraph.from_edges(n, [(i, i + 1, weight) for i in range(n - 1)])


def cycle(n: int, weight: float = 1.0) -> WeightedGraph:
    if n < 3:
        raise GraphError("cycle needs n >= 3")
    return WeightedGraph.from_edges(n, [(i, (i + 1) % n, weight) for i in range(n)])


def complete(n: int, weight: float = 1.0) -> WeightedGraph:
    if n < 2:
        raise GraphError("complete graph needs n >= 2")
    return WeightedGraph.from_edges(
        n, [(i, j, weight) for i in range(n) for j in range(i + 1, n)])


def star(n: int, weight: float = 1.0) -> WeightedGraph:
    """Star on ``n`` vertices with centre 0."""
    if n < 2:
        raise GraphError("star needs n >= 2")
    return WeightedGraph.from_edges(n, [(0, i, weight) for i in range(1, n)])


def grid(rows: int, cols: int | None = None, weight: float = 1.0) -> WeightedGraph:
    cols = rows if cols is None else cols
    if rows < 2 or cols < 2:
        raise GraphError("grid side must be >= 2")
    edges = []
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c
            if c + 1 < cols:
                edges.append((u, u + 1, weight))
            if r + 1 < rows:
                edges.append((u, u + cols, weight))
    return WeightedGraph.from_edges(rows * cols, edges)


def binary_tree(n: int, weight: float = 1.0) -> WeightedGraph:
    """Heap-ordered binary tree: vertex i has children 2i+1 and 2i+2."""
    if n < 2:
        raise GraphError("binary tree needs n >= 2")
    return WeightedGraph.from_edges(n, [((i - 1) // 2, i, weight) for i in range(1, n)])


def erdos_renyi(n: int, p: float, seed, weight: float = 1.0,
                max_retries: int = 100) -> WeightedGraph:
    if n < 2:
        raise GraphError("Erdos-Renyi graph needs n >= 2")
    if not 0 < p <= 1:
        raise GraphError("Erdos-Renyi p must lie in (0, 1]")
    iu, ju = np.triu_indices(n, k=1)
    for attempt in range(max_retries):
        gen = _rng.stream(seed, _rng.GRAPH, attempt)
        keep = gen.random(len(iu)) < p
        try:
            return WeightedGraph.from_edges(
                n, [(int(i), int(j), weight) for i, j in zip(iu[keep], ju[keep])])
        except GraphError:
            continue
    raise GenerationError(f"no connected G({n}, {p}) after {max_retries} attempts")


GENERATORS = {
    "path": path,
    "cycle": cycle,
    "complete": complete,
    "star": star,
    "grid": grid,
    "binary_tree": binary_tree,
    "erdos_renyi": erdos_renyi,
}


def build_generator(kind: str, *params, seed=None, **kwargs) -> WeightedGraph:
    """Construct a standard graph family by name."""
    try:
        make = GENERATORS[kind]
    except KeyError:
        raise GraphError(f"unknown generator {kind!r}") from None
    if kind == "erdos_renyi":
        if seed is None:
            raise GraphError("erdos_renyi requires a seed")
        return make(*params, seed=seed, **kwargs)
    try:
        return make(*params, **kwargs)
    except TypeError as exc:
        raise GraphError(f"bad parameters for {kind}: {exc}") from None


def read_edge_list(source) -> WeightedGraph:
    """Parse the ``n m`` / ``u v w`` edge-list format."""
    text = Path(source).read_text() if not hasattr(source, "read") else source.read()
    rows = [ln.split() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise GraphError("empty graph file")
    try:
        n, m = int(rows[0][0]), int(rows[0][1])
        edges = [(int(r[0]), int(r[1]), float(r[2]) if len(r) > 2 else 1.0) for r in rows[1:]]
    except (ValueError, IndexError) as exc:
        raise GraphError(f"malformed edge list: {exc}") from None
    if len(edges) != m:
        raise GraphError(f"header declares {m} edges, found {len(edges)}")
    return WeightedGraph.from_edges(n, edges)


# -- one-sink systems ---------------------------------------------------------

@dataclass(frozen=True, eq=False)
class OneSinkSystem:
    b: np.ndarray
    sink: int
    sources: frozenset
    J: np.ndarray

    @property
    def total(self) -> float:
        """Sum of the non-sink entries of ``b``."""
        return float(-self.b[self.sink])

    @property
    def n(self) -> int:
        return len(self.b)


def validate_one_sink(b, n: int | None = None, rtol: float = 1e-9) -> OneSinkSystem:
    b = np.asarray(b, dtype=np.float64).copy()
    if b.ndim != 1 or len(b) < 2:
        raise OneSinkError("b must be a vector of length >= 2")
    if n is not None and len(b) != n:
        raise OneSinkError(f"b has length {len(b)}, graph has {n} vertices")
    neg = np.flatnonzero(b < 0)
    if len(neg) != 1:
        raise OneSinkError(f"expected exactly one negative coordinate, found {len(neg)}")
    sink = int(neg[0])
    others = float(np.delete(b, sink).sum())
    if abs(b.sum()) > rtol * max(1.0, np.abs(b).max()) or abs(others + b[sink]) > rtol * max(1.0, others):
        raise OneSinkError(f"entries must sum to zero (sum={b.sum():.3g})")
    J = b / others
    J[sink] = -1.0
    b.setflags(write=False)
    J.setflags(write=False)
    return OneSinkSystem(b=b, sink=sink, sources=frozenset(int(v) for v in np.flatnonzero(b > 0)), J=J)
