"""Round-synchronous GP-CONGEST execution substrate.

Each round every node may emit at most one message to one neighbour; all
messages are delivered together at the round barrier. Rounds are charged to
either the data plane or the control plane of a :class:`CostMeter`, and the
model time of a run is ``(data + control rounds) * d_max``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Protocol, TextIO

import numpy as np

from .graph import WeightedGraph

PACKET = "packet"
CONTROL = "control"


class InvariantError(RuntimeError):
    """An internal invariant failed; indicates a bug rather than bad input."""


class ProtocolViolation(InvariantError):
    """A node broke the GP-CONGEST rules (two sends, or a send to a non-neighbour)."""


@dataclass(frozen=True, slots=True)
class Message:
    """One O(log n)-bit message: a tag plus at most one node id and one scalar."""

    kind: str
    color: int = 0
    opcode: str | None = None
    scalar: float | None = None
    origin: int | None = None

    def __post_init__(self):
        if self.kind == PACKET:
            if self.opcode is not None or self.scalar is not None or self.origin is not None:
                raise ValueError("packets carry only a colour")
        elif self.kind != CONTROL:
            raise ValueError(f"unknown message kind {self.kind!r}")


@dataclass
class CostMeter:
    d_max: float
    data_rounds: int = 0
    control_rounds: int = 0

    @property
    def rounds(self) -> int:
        return self.data_rounds + self.control_rounds

    @property
    def model_time(self) -> float:
        return self.rounds * self.d_max

    def charge(self, plane: str, rounds: int = 1) -> None:
        if rounds < 0:
            raise ValueError("cannot refund rounds")
        if plane == "data":
            self.data_rounds += rounds
        elif plane == "control":
            self.control_rounds += rounds
        else:
            raise ValueError(f"unknown plane {plane!r}")


@dataclass(frozen=True)
class Round:
    index: int
    plane: str
    outbox: tuple          # per node: None or (dest, Message)
    inboxes: tuple         # per node: tuple of Messages


class Outbox:
    __slots__ = ("node", "entry")

    def __init__(self, node: int):
        self.node = node
        self.entry = None

    def send(self, dest: int, msg: Message) -> None:
        if self.entry is not None:
            raise ProtocolViolation(f"node {self.node} attempted a second send in one round")
        self.entry = (int(dest), msg)


class Process(Protocol):
    def step(self, outbox: Outbox) -> None: ...

    def deliver(self, inbox: list[Message]) -> None: ...


class Network:
    """Executes rounds for a list of node processes on a fixed graph."""

    def __init__(self, graph: WeightedGraph, meter: CostMeter | None = None,
                 trace: TextIO | None = None):
        if graph.n < 2:
            raise ValueError("the network model needs n >= 2")
        self.graph = graph
        self.meter = meter if meter is not None else CostMeter(graph.d_max)
        self.trace = trace
        self.round_index = 0
        self._degree = np.diff(graph.indptr)

    def run_round(self, nodes, plane: str = "data") -> Round:
        g = self.graph
        if len(nodes) != g.n:
            raise ValueError("one process per vertex required")
        boxes = [Outbox(u) for u in range(g.n)]
        for u, node in enumerate(nodes):
            if node is not None:
                node.step(boxes[u])
        inboxes: list[list[Message]] = [[] for _ in range(g.n)]
        for u, box in enumerate(boxes):
            if box.entry is None:
                continue
            dest, msg = box.entry
            if not g.has_edge(u, dest):
                raise ProtocolViolation(f"node {u} sent to non-neighbour {dest}")
            inboxes[dest].append(msg)
            if self.trace is not None:
                self.trace.write(f"{self.round_index}\t{u}\t{dest}\t{msg.kind}\n")
        for u in range(g.n):
            assert len(inboxes[u]) <= self._degree[u]
        for u, node in enumerate(nodes):
            if node is not None:
                node.deliver(inboxes[u])
        rnd = Round(
            index=self.round_index,
            plane=plane,
            outbox=tuple(b.entry for b in boxes),
            inboxes=tuple(tuple(x) for x in inboxes),
        )
        self.round_index += 1
        self.meter.charge(plane)
        return rnd


# -- control plane -----------------------------------------------------------------

@dataclass(frozen=True)
class ControlTree:
    root: int
    parent: tuple[int, ...]
    children: tuple[tuple[int, ...], ...]
    depth: int
    level: tuple[int, ...] = field(repr=False)

    @classmethod
    def bfs(cls, graph: WeightedGraph, root: int) -> "ControlTree":
        if graph.n < 2:
            raise ValueError("control tree needs n >= 2")
        parent = [-1] * graph.n
        level = [-1] * graph.n
        level[root] = 0
        queue = deque([root])
        while queue:
            u = queue.popleft()
            for v in graph.neighbors(u):
                v = int(v)
                if level[v] < 0:
                    level[v] = level[u] + 1
                    parent[v] = u
                    queue.append(v)
        children = [[] for _ in range(graph.n)]
        for v, p in enumerate(parent):
            if p >= 0:
                children[p].append(v)
        return cls(root=root, parent=tuple(parent), children=tuple(tuple(c) for c in children),
                   depth=max(level), level=tuple(level))


class _BroadcastNode:
    def __init__(self, u: int, tree: ControlTree, payload: Message | None):
        self.u = u
        self.payload = payload
        self.pending = deque(tree.children[u])

    def step(self, outbox: Outbox) -> None:
        if self.payload is not None and self.pending:
            outbox.send(self.pending.popleft(), self.payload)

    def deliver(self, inbox):
        for msg in inbox:
            if self.payload is None:
                self.payload = msg


def control_broadcast(network: Network, tree: ControlTree, opcode: str,
                      scalar: float | None = None) -> int:
    """Flood one control message down ``tree``; returns rounds used.

    A parent forwards to one child per round, so a node with k children needs
    k rounds to serve them all.
    """
    msg = Message(CONTROL, opcode=opcode, scalar=scalar, origin=tree.root)
    nodes = [_BroadcastNode(u, tree, msg if u == tree.root else None) for u in range(network.graph.n)]
    used = 0
    while any(nd.payload is None or nd.pending for nd in nodes):
        network.run_round(nodes, plane="control")
        used += 1
    return used


class _MaxNode:
    def __init__(self, u: int, tree: ControlTree, value: float):
        self.u = u
        self.parent = tree.parent[u]
        self.waiting = len(tree.children[u])
        self.value = value
        self.sent = False

    def step(self, outbox: Outbox) -> None:
        if not self.sent and self.waiting == 0 and self.parent >= 0:
            outbox.send(self.parent, Message(CONTROL, opcode="max", scalar=self.value, origin=self.u))
            self.sent = True

    def deliver(self, inbox):
        for msg in inbox:
            self.value = max(self.value, msg.scalar)
            self.waiting -= 1


class _CollectNode:
    def __init__(self, u: int, tree: ControlTree, value: float):
        self.u = u
        self.parent = tree.parent[u]
        self.queue = deque([(u, value)])
        self.got: dict[int, float] = {}

    def step(self, outbox: Outbox) -> None:
        if self.parent >= 0 and self.queue:
            origin, value = self.queue.popleft()
            outbox.send(self.parent, Message(CONTROL, opcode="collect", scalar=value, origin=origin))

    def deliver(self, inbox):
        for msg in inbox:
            if self.parent >= 0:
                self.queue.append((msg.origin, msg.scalar))
            else:
                self.got[msg.origin] = msg.scalar


def control_convergecast(network: Network, tree: ControlTree, values, reduce: str = "max"):
    """Aggregate per-node scalars at the root of ``tree``.

    ``reduce="max"`` returns the maximum (one message per node, ``depth``
    rounds); ``reduce="collect"`` returns the full vector, pipelining one
    ``(origin, value)`` message per node per round.
    """
    n = network.graph.n
    values = [float(v) for v in values]
    if reduce == "max":
        nodes = [_MaxNode(u, tree, values[u]) for u in range(n)]
        root = nodes[tree.root]
        while root.waiting > 0:
            network.run_round(nodes, plane="control")
        return root.value
    if reduce == "collect":
        nodes = [_CollectNode(u, tree, values[u]) for u in range(n)]
        root = nodes[tree.root]
        root.got[tree.root] = values[tree.root]
        while len(root.got) < n:
            network.run_round(nodes, plane="control")
        return np.array([root.got[u] for u in range(n)])
    raise ValueError(f"unknown reduction {reduce!r}")
