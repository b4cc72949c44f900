"""The Data Collection queueing protocol and occupancy estimation.

Sources inject Bernoulli packets at rate ``beta * J_u``; every non-sink node
with a non-empty queue forwards one packet per round to a neighbour chosen
with probability ``w_uv / d_u``; the sink swallows whatever reaches it. The
fraction of rounds a node transmits estimates its stationary occupancy.

Two interchangeable drivers exist. ``engine="message"`` runs one
:class:`NodeProcess` per vertex through :class:`~queuesolve.engine.Network`,
with real :class:`~queuesolve.engine.Message` objects; ``engine="fast"``
runs the compiled kernel. Both draw two uniforms per node per slot from the
same per-node streams, so their trajectories are identical.

Several one-sink processes ("colours") can share the network by
time-division multiplexing: round ``r`` serves colour ``r mod l`` only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import rng as _rng
from ._kernel import run_slots
from .engine import PACKET, CostMeter, InvariantError, Message, Network, Outbox
from .graph import OneSinkSystem, WeightedGraph

MAX_ROUNDS = 10**9
_BLOCK = 8192


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Horizon:
    burn_in: int
    sample: int

    @property
    def total(self) -> int:
        return self.burn_in + self.sample


def window_horizon(t_hit: float, n: int, eps1: float, eps2: float, kappa: float,
                  burn_const: float = 64.0, sample_const: float = 4.0) -> Horizon:
    """Burn-in ``burn_const * t_hit * ln(1/eps1)`` then ``sample_const * ln n / (kappa eps2)^2`` samples."""
    if not (0 < eps1 < 1 and eps2 > 0 and 0 < kappa < 1):
        raise ConfigurationError("need 0 < eps1 < 1, eps2 > 0, 0 < kappa < 1")
    burn = math.ceil(burn_const * t_hit * math.log(1.0 / eps1))
    sample = math.ceil(sample_const * math.log(max(n, 2)) / (kappa * eps2) ** 2)
    h = Horizon(burn_in=max(burn, 0), sample=max(sample, 1))
    if h.total > MAX_ROUNDS:
        raise ConfigurationError(f"horizon of {h.total} rounds exceeds the {MAX_ROUNDS} guard")
    return h


@dataclass(frozen=True)
class FixedHorizon:
    """Mixing then sampling, with the window lengths set by :func:`window_horizon`."""

    t_hit: float
    eps1: float
    eps2: float
    kappa: float
    burn_const: float = 64.0
    sample_const: float = 4.0

    def horizon(self, n: int) -> Horizon:
        return window_horizon(self.t_hit, n, self.eps1, self.eps2, self.kappa,
                             self.burn_const, self.sample_const)


@dataclass(frozen=True)
class PaperListing:
    """Per-node stop rule ``0 < est_T - est_{T-1} <= eps``, counted from round one.

    Nodes that never meet the rule are cut off after ``max_rounds``.
    """

    eps: float
    max_rounds: int = 1_000_000

    def __post_init__(self):
        if not 0 < self.eps < 1:
            raise ConfigurationError("listing eps must lie in (0, 1)")
        if not 0 < self.max_rounds <= MAX_ROUNDS:
            raise ConfigurationError("max_rounds out of range")


@dataclass
class OccupancyEstimate:
    eta: np.ndarray
    cnt: np.ndarray
    T: np.ndarray
    mode: str
    horizon: Horizon | None
    rounds: int
    generated: int
    sunk: int
    queued: int
    trace: np.ndarray | None = field(default=None, repr=False)


def source_rates(system: OneSinkSystem, beta: float) -> np.ndarray:
    rates = np.where(np.arange(system.n) == system.sink, 0.0, beta * np.asarray(system.J))
    rates = np.clip(rates, 0.0, None)
    if beta < 0 or np.any(rates > 1.0):
        raise ConfigurationError(f"beta*J exceeds 1 (beta={beta})")
    return rates


# -- message-level driver ---------------------------------------------------------

class NodeProcess:
    """Per-node protocol state for one or more colours."""

    def __init__(self, u: int, neighbors, cum, sinks, rates, streams):
        self.id = u
        self.neighbors = np.asarray(neighbors)
        self.cum = np.asarray(cum)
        self.sinks = list(sinks)
        self.rates = [float(r) for r in rates]
        self.streams = streams
        ncol = len(self.sinks)
        self.queue = [0] * ncol
        self.cnt = [0] * ncol
        self.T = [0] * ncol
        self.stopped = [False] * ncol
        self.prev = [0.0] * ncol
        self.generated = [0] * ncol
        self.sunk = [0] * ncol
        # per-round settings written by the driver
        self.color = 0
        self.active = True
        self.counting = False
        self.listing_eps = 0.0

    def is_sink(self, c: int) -> bool:
        return self.sinks[c] == self.id

    def step(self, outbox: Outbox) -> None:
        c = self.color
        if not self.active:
            return
        u_gen, u_nbr = self.streams[c].random(2)
        if self.rates[c] > 0 and u_gen < self.rates[c]:
            self.queue[c] += 1
            self.generated[c] += 1
        if self.is_sink(c):
            return
        counts = self.counting and not self.stopped[c]
        if counts:
            self.T[c] += 1
        if self.queue[c] > 0:
            k = int(np.searchsorted(self.cum, u_nbr, side="right"))
            self.queue[c] -= 1
            outbox.send(int(self.neighbors[k]), Message(PACKET, color=c))
            if counts:
                self.cnt[c] += 1
        if counts and self.listing_eps > 0:
            est = self.cnt[c] / self.T[c]
            inc = est - self.prev[c]
            if 0 < inc <= self.listing_eps:
                self.stopped[c] = True
            self.prev[c] = est

    def deliver(self, inbox) -> None:
        for msg in inbox:
            if self.is_sink(msg.color):
                self.sunk[msg.color] += 1
            else:
                self.queue[msg.color] += 1


class _Collection:
    """Shared state layout for both drivers: arrays of shape (colours, n)."""

    def __init__(self, graph: WeightedGraph, sinks, rates, seed, iterations, initial=None):
        self.graph = graph
        self.seed = seed
        self.sinks = [int(s) for s in sinks]
        self.ncol = len(self.sinks)
        n = graph.n
        self.rates = np.ascontiguousarray(np.asarray(rates, dtype=np.float64).reshape(self.ncol, n))
        self.is_sink = np.zeros((self.ncol, n), dtype=np.bool_)
        for c, s in enumerate(self.sinks):
            self.is_sink[c, s] = True
        self.q = np.zeros((self.ncol, n), dtype=np.int64)
        if initial is not None:
            self.q[:] = np.asarray(initial, dtype=np.int64).reshape(self.ncol, n)
            self.q[self.is_sink] = 0
        self.cnt = np.zeros((self.ncol, n), dtype=np.int64)
        self.T = np.zeros((self.ncol, n), dtype=np.int64)
        self.stopped = np.zeros((self.ncol, n), dtype=np.bool_)
        self.prev = np.zeros((self.ncol, n))
        self.generated = np.zeros(self.ncol, dtype=np.int64)
        self.sunk = np.zeros(self.ncol, dtype=np.int64)
        self.generated += self.q.sum(axis=1)  # pre-loaded packets count as injected
        self.streams = [_rng.node_streams(seed, n, c, it) for c, it in enumerate(iterations)]

    def reset_color(self, c: int, rates, iteration: int) -> None:
        """Empty colour ``c`` and restart it at new rates on fresh streams."""
        self.rates[c] = rates
        for arr in (self.q, self.cnt, self.T, self.prev):
            arr[c] = 0
        self.stopped[c] = False
        self.generated[c] = self.sunk[c] = 0
        self.streams[c] = _rng.node_streams(self.seed, self.graph.n, c, iteration)

    def conservation_ok(self) -> bool:
        return bool(np.all(self.generated == self.sunk + self.q.sum(axis=1)))


class FastCollection(_Collection):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        g = self.graph
        self._indptr = np.ascontiguousarray(g.indptr, dtype=np.int64)
        self._indices = np.ascontiguousarray(g.indices, dtype=np.int64)
        self._cum = g.cumulative_transitions()

    def run(self, slots: int, active, counting: bool, listing_eps: float = 0.0,
            trace: np.ndarray | None = None) -> int:
        """Run up to ``slots`` super-rounds; returns super-rounds executed."""
        active = np.asarray(active, dtype=np.bool_)
        n = self.graph.n
        done = 0
        empty = np.zeros((0, self.ncol, n), dtype=np.int64)
        while done < slots:
            B = min(_BLOCK, slots - done)
            U = np.zeros((self.ncol, n, B, 2))
            for c in range(self.ncol):
                if active[c]:
                    for u in range(n):
                        U[c, u] = self.streams[c][u].random((B, 2))
            used = run_slots(self.q, self.cnt, self.T, self.stopped, self.prev,
                             self.generated, self.sunk, self.rates, self.is_sink,
                             self._indptr, self._indices, self._cum, U, active,
                             counting, float(listing_eps),
                             trace if trace is not None else empty, done)
            done += used
            if used < B:
                break
        return done


class MessageCollection(_Collection):
    def __init__(self, *args, network: Network | None = None, **kwargs):
        super().__init__(*args, **kwargs)
        g = self.graph
        cum = g.cumulative_transitions()
        self.network = network if network is not None else Network(g)
        self.nodes = [
            NodeProcess(u, g.neighbors(u), cum[g.indptr[u]:g.indptr[u + 1]], self.sinks,
                        self.rates[:, u], [self.streams[c][u] for c in range(self.ncol)])
            for u in range(g.n)
        ]
        for u, node in enumerate(self.nodes):
            node.queue = [int(self.q[c, u]) for c in range(self.ncol)]
            node.generated = [int(self.q[c, u]) for c in range(self.ncol)]
        self.rounds: list = []
        self.keep_rounds = False

    def reset_color(self, c: int, rates, iteration: int) -> None:
        super().reset_color(c, rates, iteration)
        for u, nd in enumerate(self.nodes):
            nd.queue[c] = nd.cnt[c] = nd.T[c] = nd.generated[c] = nd.sunk[c] = 0
            nd.stopped[c] = False
            nd.prev[c] = 0.0
            nd.rates[c] = float(self.rates[c, u])
            nd.streams[c] = self.streams[c][u]

    def _sync(self):
        for u, nd in enumerate(self.nodes):
            self.q[:, u] = nd.queue
            self.cnt[:, u] = nd.cnt
            self.T[:, u] = nd.T
            self.stopped[:, u] = nd.stopped
            self.prev[:, u] = nd.prev
        for c in range(self.ncol):
            self.generated[c] = sum(nd.generated[c] for nd in self.nodes)
            self.sunk[c] = sum(nd.sunk[c] for nd in self.nodes)

    def step(self, slot: int, active=None, counting: bool = False, listing_eps: float = 0.0):
        """One network round serving colour ``slot mod colours``; returns the :class:`Round`."""
        c = slot % self.ncol
        on = True if active is None else bool(active[c])
        for nd in self.nodes:
            nd.color = c
            nd.active = on
            nd.counting = counting
            nd.listing_eps = listing_eps
        rnd = self.network.run_round(self.nodes, plane="data")
        self._sync()
        if not self.conservation_ok():
            raise InvariantError(f"packet conservation violated in round {rnd.index}")
        if self.keep_rounds:
            self.rounds.append(rnd)
        return rnd

    def run(self, slots: int, active, counting: bool, listing_eps: float = 0.0,
            trace: np.ndarray | None = None) -> int:
        active = np.asarray(active, dtype=bool)
        done = 0
        while done < slots:
            for c in range(self.ncol):
                self.step(c, active, counting, listing_eps)
            if trace is not None and trace.shape[0] > 0:
                trace[done] = self.q
            done += 1
            if listing_eps > 0 and counting and self._all_stopped(active):
                break
        return done

    def _all_stopped(self, active) -> bool:
        return all(self.stopped[c][~self.is_sink[c]].all() for c in range(self.ncol) if active[c])


def dc_step(coll: "MessageCollection"):
    """One round of the single-colour process."""
    if coll.ncol != 1:
        raise ValueError("dc_step drives a single-colour collection")
    return coll.step(0)


def multicolor_dc_step(coll: "MessageCollection", slot: int):
    """One round of the multiplexed process; only colour ``slot mod l`` moves."""
    return coll.step(slot)


def make_collection(graph, sinks, rates, seed, iterations, engine: str = "fast", initial=None, **kw):
    if engine == "fast":
        return FastCollection(graph, sinks, rates, seed, iterations, initial=initial)
    if engine == "message":
        return MessageCollection(graph, sinks, rates, seed, iterations, initial=initial, **kw)
    raise ValueError(f"unknown engine {engine!r}")


def estimate_phase(coll: _Collection, mode, active=None, record: bool = False):
    """Run one estimation phase on every active colour of ``coll``.

    Returns ``(super_rounds, horizon, trace)``; data rounds consumed are
    ``super_rounds * colours``.
    """
    n = coll.graph.n
    active = np.ones(coll.ncol, dtype=bool) if active is None else np.asarray(active, dtype=bool)
    if isinstance(mode, FixedHorizon):
        h = mode.horizon(n)
        trace = np.zeros((h.total, coll.ncol, n), dtype=np.int64) if record else None
        used = coll.run(h.burn_in, active, counting=False,
                        trace=trace[:h.burn_in] if record else None)
        # burn-in samples are never counted
        assert not coll.cnt.any() and not coll.T.any()
        used += coll.run(h.sample, active, counting=True,
                         trace=trace[h.burn_in:] if record else None)
        return used, h, trace
    if isinstance(mode, PaperListing):
        trace = np.zeros((mode.max_rounds, coll.ncol, n), dtype=np.int64) if record else None
        used = coll.run(mode.max_rounds, active, counting=True, listing_eps=mode.eps, trace=trace)
        return used, None, (trace[:used] if record else None)
    raise TypeError(f"unknown estimation mode {mode!r}")


def occupancy_from_counts(cnt, T, sink: int) -> np.ndarray:
    eta = np.where(T > 0, cnt / np.maximum(T, 1), 0.0)
    eta[sink] = 0.0
    return eta


def drw_compute(graph: WeightedGraph, system: OneSinkSystem, beta: float, mode, seed,
                iteration: int = 1, engine: str = "fast", meter: CostMeter | None = None,
                record: bool = False, initial=None) -> OccupancyEstimate:
    """Simulate the Data Collection process at rate ``beta`` and estimate occupancies."""
    rates = source_rates(system, beta)
    kw = {}
    if engine == "message" and meter is not None:
        kw["network"] = Network(graph, meter=meter)
    coll = make_collection(graph, [system.sink], rates[None, :], seed, [iteration],
                           engine=engine, initial=initial, **kw)
    used, h, trace = estimate_phase(coll, mode, record=record)
    if meter is not None and engine != "message":
        meter.charge("data", used)
    eta = occupancy_from_counts(coll.cnt[0], coll.T[0], system.sink)
    return OccupancyEstimate(
        eta=eta, cnt=coll.cnt[0].copy(), T=coll.T[0].copy(),
        mode="fixed_horizon" if isinstance(mode, FixedHorizon) else "paper_listing",
        horizon=h, rounds=used, generated=int(coll.generated[0]), sunk=int(coll.sunk[0]),
        queued=int(coll.q[0].sum()), trace=None if trace is None else trace[:, 0, :],
    )
