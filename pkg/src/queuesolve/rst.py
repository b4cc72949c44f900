"""Random spanning trees through a low-diameter decomposition.

Pipeline: split the graph into clusters by exponentially shifted BFS; for
every cluster, compute where a walk entering at ``v`` leaves (exit
distributions, via a one-sink solve on a small gadget); draw an
Aldous-Broder tree inside each cluster; walk the quotient graph of clusters
to pick the tree joining them; glue everything together.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from . import rng as _rng
from .collection import ConfigurationError
from .engine import InvariantError
from .graph import WeightedGraph
from .solver import drw_lsolve

SCHEMA = "queuesolve.rst/1"


class CoverTimeExceeded(InvariantError):
    pass


# -- trees ----------------------------------------------------------------------

@dataclass(frozen=True)
class SpanningTree:
    n: int
    edges: tuple[tuple[int, int], ...]

    @classmethod
    def build(cls, n: int, edges, graph: WeightedGraph | None = None) -> "SpanningTree":
        canon = tuple(sorted((min(u, v), max(u, v)) for u, v in edges))
        tree = cls(n=n, edges=canon)
        tree.validate(graph)
        return tree

    def validate(self, graph: WeightedGraph | None = None) -> None:
        if len(self.edges) != self.n - 1:
            raise InvariantError(f"tree on {self.n} vertices has {len(self.edges)} edges")
        parent = list(range(self.n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for u, v in self.edges:
            if graph is not None and not graph.has_edge(u, v):
                raise InvariantError(f"tree edge ({u}, {v}) is not a graph edge")
            ru, rv = find(u), find(v)
            if ru == rv:
                raise InvariantError(f"tree edge ({u}, {v}) closes a cycle")
            parent[ru] = rv

    def to_text(self) -> str:
        return "".join(f"{u} {v}\n" for u, v in self.edges)


def _pick(r: float, masses) -> int:
    """Index sampled proportionally to ``masses`` using the uniform ``r``."""
    c = np.cumsum(masses)
    k = int(np.searchsorted(c, r * c[-1], side="right"))
    return min(k, len(c) - 1)


def _cover_cap(graph: WeightedGraph) -> int:
    return 100 * max(graph.m, 1) * max(graph.diameter(), 1)


def aldous_broder(graph: WeightedGraph, gen: np.random.Generator, cap: int | None = None):
    """First-entry edges of a walk run until every vertex is visited.

    Returns ``(edges, steps)``. The start is ``floor(r n)`` for the first
    uniform ``r``; each step then consumes one uniform.
    """
    n = graph.n
    if n == 1:
        return [], 0
    cap = _cover_cap(graph) if cap is None else cap
    u = min(int(gen.random() * n), n - 1)
    seen = np.zeros(n, dtype=bool)
    seen[u] = True
    left = n - 1
    edges = []
    steps = 0
    while left:
        if steps >= cap:
            raise CoverTimeExceeded(f"walk did not cover the graph within {cap} steps")
        nbrs, p = graph.transition_row(u)
        v = int(nbrs[_pick(gen.random(), p)])
        steps += 1
        if not seen[v]:
            seen[v] = True
            left -= 1
            edges.append((u, v))
        u = v
    return edges, steps


def sample_aldous_broder(graph: WeightedGraph, seed) -> SpanningTree:
    edges, _ = aldous_broder(graph, _rng.stream(seed, _rng.WALK))
    return SpanningTree.build(graph.n, edges, graph)


# -- decomposition ------------------------------------------------------------------

@dataclass
class Decomposition:
    part: np.ndarray                 # partition id per vertex
    leaders: list[int]               # leader of partition i
    members: list[np.ndarray]        # sorted vertices of partition i
    cut_edges: list[tuple]           # (u, v, w) with u < v in different partitions
    diameters: list[int]
    phi: float
    shifts: np.ndarray
    rounds: int

    @property
    def k(self) -> int:
        return len(self.leaders)


def decompose(graph: WeightedGraph, phi: float, seed, shifts=None) -> Decomposition:
    """Exponentially shifted multi-source BFS.

    Vertex ``u`` starts its own search at time ``max(delta) - delta_u`` unless
    already claimed; every other vertex joins the first search to reach it,
    the lower leader id winning ties.
    """
    if not 0 < phi <= 1:
        raise ConfigurationError("phi must lie in (0, 1]")
    n = graph.n
    if shifts is None:
        delta = _rng.stream(seed, _rng.DECOMP).exponential(1.0 / phi, n)
    else:
        delta = np.asarray(shifts, dtype=np.float64)
        if delta.shape != (n,) or np.any(delta < 0):
            raise ConfigurationError("shifts must be n non-negative numbers")
    start = delta.max() - delta
    owner = np.full(n, -1, dtype=np.int64)
    claim_time = np.zeros(n)
    heap = [(float(start[u]), u, u) for u in range(n)]
    heapq.heapify(heap)
    while heap:
        t, lead, x = heapq.heappop(heap)
        if owner[x] >= 0:
            continue
        owner[x] = lead
        claim_time[x] = t
        for y in graph.neighbors(x):
            if owner[y] < 0:
                heapq.heappush(heap, (t + 1.0, lead, int(y)))

    leaders = sorted(int(u) for u in np.flatnonzero(owner == np.arange(n)))
    pid = {u: i for i, u in enumerate(leaders)}
    part = np.array([pid[int(o)] for o in owner], dtype=np.int64)
    members = [np.flatnonzero(part == i) for i in range(len(leaders))]
    cut = [(u, v, w) for u, v, w in graph.edges if part[u] != part[v]]
    diam = []
    for verts in members:
        if len(verts) == 1:
            diam.append(0)
        else:
            sub, _ = graph.subgraph(verts)
            diam.append(sub.diameter())
    rounds = int(math.ceil(float(claim_time.max()))) + 1
    return Decomposition(part=part, leaders=leaders, members=members, cut_edges=cut,
                         diameters=diam, phi=phi, shifts=delta, rounds=rounds)


# -- exit distributions -----------------------------------------------------------------

@dataclass
class ExitRows:
    """Exit distribution of one partition: ``P[i, j]`` for vertex ``verts[i]`` and edge ``boundary[j]``."""

    verts: np.ndarray
    boundary: list[tuple]            # (inside endpoint, outside endpoint, weight)
    P: np.ndarray
    raw_sums: np.ndarray
    rounds: int = 0


def boundary_edges(graph: WeightedGraph, dec: Decomposition, i: int) -> list[tuple]:
    out = []
    for u, v, w in dec.cut_edges:
        if dec.part[u] == i:
            out.append((u, v, w))
        elif dec.part[v] == i:
            out.append((v, u, w))
    return sorted(out)


def exit_gadget(graph: WeightedGraph, verts, boundary, j: int):
    """The cluster plus a copy ``u'`` of the far end of edge ``j`` and a dummy sink ``u*``.

    ``u'`` hangs off edge ``j`` only; every other boundary edge is redirected
    to ``u*`` (parallel edges merged). Returns ``(gadget, b, index of u')``.
    """
    sub, order = graph.subgraph(verts)
    local = {v: i for i, v in enumerate(order)}
    k = len(order)
    src, dummy = k, k + 1
    edges = list(sub.edges)
    u, _, w = boundary[j]
    edges.append((local[u], src, w))
    merged: dict[int, float] = {}
    for jj, (a, _, wa) in enumerate(boundary):
        if jj != j:
            merged[local[a]] = merged.get(local[a], 0.0) + wa
    edges.extend((a, dummy, wa) for a, wa in sorted(merged.items()))
    gadget = WeightedGraph.from_edges(k + 2, edges)
    b = np.zeros(k + 2)
    b[src], b[dummy] = 1.0, -1.0
    return gadget, b, src


def exit_distributions(graph: WeightedGraph, dec: Decomposition, i: int, eps: float = 0.1,
                       seed=0, method: str = "oracle", direct_singletons: bool = True,
                       max_retries: int = 6, **solver_opts) -> ExitRows:
    """Exit probabilities ``P_v(e)`` for every vertex and boundary edge of partition ``i``."""
    verts = dec.members[i]
    boundary = boundary_edges(graph, dec, i)
    nv, nb = len(verts), len(boundary)
    if nb == 0:
        return ExitRows(verts, boundary, np.zeros((nv, 0)), np.zeros(nv))
    if nb == 1:
        return ExitRows(verts, boundary, np.ones((nv, 1)), np.ones(nv))
    if nv == 1 and direct_singletons:
        # one-vertex cluster: the exit is the walk's next step
        v = int(verts[0])
        nbrs, p = graph.transition_row(v)
        pos = {int(x): t for t, x in enumerate(nbrs)}
        row = np.array([p[pos[o]] for _, o, _ in boundary])
        return ExitRows(verts, boundary, row[None, :], np.array([row.sum()]))

    gadgets = [exit_gadget(graph, verts, boundary, j) for j in range(nb)]
    rounds = 0
    if method == "oracle":
        xs = [(oracle.exact_solve(g, b).x, src) for g, b, src in gadgets]
        raw = np.column_stack([x[:nv] / x[src] for x, src in xs])
    elif method == "solver":
        # retry the whole cluster at half the granularity until every gadget
        # source is guaranteed and every vertex has some exit mass
        kappa = 1.0 / math.sqrt(nv)
        for attempt in range(max_retries):
            raw = np.zeros((nv, nb))
            ok = True
            for j, (g, b, src) in enumerate(gadgets):
                rep = drw_lsolve(g, b, eps, kappa, _rng.derive_seed(seed, _rng.EXIT, i, j, attempt),
                                 **solver_opts)
                rounds += rep.rounds
                if not rep.guaranteed[src]:
                    ok = False
                    break
                raw[:, j] = rep.x_hat[:nv] / rep.x_hat[src]
            if ok and np.all(raw.sum(axis=1) > 0):
                break
            kappa /= 2
        else:
            raise InvariantError(f"exit distributions of partition {i} not resolved after {max_retries} tries")
    else:
        raise ValueError(f"unknown exit method {method!r}")
    sums = raw.sum(axis=1)
    if np.any(sums <= 0):
        raise InvariantError(f"partition {i} has a vertex with no exit mass")
    return ExitRows(verts, boundary, raw / sums[:, None], sums, rounds)


# -- reduced walk -------------------------------------------------------------------

@dataclass
class ReducedWalk:
    super_edges: list[tuple[int, int]]
    physical: list[tuple[int, int]]
    steps: int
    rounds: int


def _aggregate(dec: Decomposition, table: list[ExitRows]):
    """For each partition: neighbour partitions (sorted), their masses, and per-neighbour cut-edge masses."""
    out = []
    for i, rows in enumerate(table):
        by_part: dict[int, list[int]] = {}
        for j, (_, o, _) in enumerate(rows.boundary):
            by_part.setdefault(int(dec.part[o]), []).append(j)
        nbr = sorted(by_part)
        col_mass = rows.P.sum(axis=0) if len(rows.verts) > 1 else rows.P[0]
        masses = np.array([np.sum(col_mass[by_part[t]]) for t in nbr])
        out.append((nbr, masses, [(by_part[t], col_mass[by_part[t]]) for t in nbr]))
    return out


def reduced_walk(graph: WeightedGraph, dec: Decomposition, table: list[ExitRows], seed,
                 entry_conditioned: bool = False) -> ReducedWalk:
    """Walk the cluster graph until every cluster is visited.

    By default cluster ``S_i`` moves to ``S_j`` with probability proportional
    to the exit mass summed over all entry vertices; the physical edge for a
    first entry is then drawn from the ``S_i``-``S_j`` cut with the same
    masses. With ``entry_conditioned`` the walk remembers the vertex it
    entered through and exits by that vertex's own distribution.
    """
    k = dec.k
    walk = _rng.stream(seed, _rng.WALK)
    cut_rng = _rng.stream(seed, _rng.CUT)
    start_v = min(int(walk.random() * graph.n), graph.n - 1)
    if k == 1:
        return ReducedWalk([], [], 0, 0)
    cap = _cover_cap(graph)
    agg = _aggregate(dec, table)
    cur = int(dec.part[start_v])
    entry = start_v
    seen = np.zeros(k, dtype=bool)
    seen[cur] = True
    left = k - 1
    sedges, phys = [], []
    steps = rounds = 0
    while left:
        if steps >= cap:
            raise CoverTimeExceeded(f"reduced walk did not cover {k} clusters within {cap} steps")
        rows = table[cur]
        if entry_conditioned:
            vi = int(np.searchsorted(rows.verts, entry))
            j = _pick(walk.random(), rows.P[vi])
            u, o, _ = rows.boundary[j]
            nxt, edge = int(dec.part[o]), (int(u), int(o))
            entry = int(o)
        else:
            nbr, masses, cuts = agg[cur]
            t = _pick(walk.random(), masses)
            nxt, edge = nbr[t], None
            if not seen[nxt]:
                idx, cm = cuts[t]
                u, o, _ = rows.boundary[idx[_pick(cut_rng.random(), cm)]]
                edge = (int(u), int(o))
        steps += 1
        rounds += dec.diameters[cur] + 1
        if not seen[nxt]:
            seen[nxt] = True
            left -= 1
            sedges.append((cur, nxt))
            phys.append(edge)
        cur = nxt
    return ReducedWalk(sedges, phys, steps, rounds)


# -- full pipeline --------------------------------------------------------------------

def partition_tree(graph: WeightedGraph, verts, seed, pid: int = 0):
    """Aldous-Broder tree of the induced subgraph on ``verts``, in global labels."""
    sub, order = graph.subgraph(verts)
    edges, steps = aldous_broder(sub, _rng.stream(seed, _rng.TREE, pid))
    return [(order[a], order[b]) for a, b in edges], steps


@dataclass
class RSTResult:
    tree: SpanningTree
    decomposition: Decomposition
    exits: list[ExitRows] = field(repr=False)
    walk: ReducedWalk = field(repr=False)
    rounds: int
    model_time: float
    seed: object
    phi: float
    eps: float

    def metadata(self) -> dict:
        return {
            "schema": SCHEMA,
            "seed": self.seed,
            "phi": self.phi,
            "epsilon": self.eps,
            "rounds": self.rounds,
            "model_time": self.model_time,
            "partitions": self.decomposition.k,
            "cut_edges": len(self.decomposition.cut_edges),
        }

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), sort_keys=True)


def sample_rst(graph: WeightedGraph, seed, eps: float = 0.1, phi: float | None = None,
               exits: str = "oracle", entry_conditioned: bool = False, shifts=None,
               **solver_opts) -> RSTResult:
    if graph.n < 2:
        raise ConfigurationError("need at least two vertices")
    phi = 1.0 / math.sqrt(graph.n) if phi is None else phi
    dec = decompose(graph, phi, seed, shifts=shifts)
    table = [exit_distributions(graph, dec, i, eps, seed, method=exits, **solver_opts)
             for i in range(dec.k)]
    edges = []
    tree_steps = 0
    for i, verts in enumerate(dec.members):
        te, steps = partition_tree(graph, verts, seed, i)
        edges.extend(te)
        tree_steps = max(tree_steps, steps)
    walk = reduced_walk(graph, dec, table, seed, entry_conditioned=entry_conditioned)
    edges.extend(walk.physical)
    try:
        tree = SpanningTree.build(graph.n, edges, graph)
    except InvariantError as exc:
        raise InvariantError(f"combined tree is invalid: {exc}") from exc
    exit_rounds = max((t.rounds for t in table), default=0)
    rounds = dec.rounds + exit_rounds + tree_steps + walk.rounds
    return RSTResult(tree=tree, decomposition=dec, exits=table, walk=walk, rounds=rounds,
                     model_time=rounds * graph.d_max, seed=seed, phi=phi, eps=eps)
