"""Controller-driven Laplacian solving on top of the Data Collection process.

The controller runs a binary search over the injection rate: starting from
``beta = 1/2`` it halves ``beta`` until every estimated occupancy sits below
``(3/4)(1 - eps)``. The occupancies at that rate, rescaled by degree and
rate, give the solution coordinates; coordinates whose occupancy is too
small to estimate to relative accuracy are flagged and returned as 0.

A right-hand side with several negative entries is split into one-sink
systems that run as colours of one time-division multiplexed simulation.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import oracle
from .collection import (ConfigurationError, FixedHorizon, PaperListing, estimate_phase, window_horizon,
                         make_collection, occupancy_from_counts, source_rates)
from .engine import ControlTree, CostMeter, InvariantError, Network, control_broadcast, control_convergecast
from .graph import OneSinkError, OneSinkSystem, WeightedGraph, laplacian, validate_one_sink

SCHEMA = "queuesolve.solve/1"


class SolverError(InvariantError):
    """The rate search fell below the stability floor without converging."""


@dataclass(frozen=True)
class SolverConfig:
    eps: float
    kappa: float
    t_hit: float | None = None
    burn_const: float = 64.0
    sample_const: float = 4.0
    mode: str = "fixed_horizon"
    engine: str = "fast"

    def __post_init__(self):
        if not 0 < self.eps < 0.5:
            raise ConfigurationError("eps must lie in (0, 1/2)")
        if not 0 < self.kappa < 1:
            raise ConfigurationError("kappa must lie in (0, 1)")
        if self.mode not in ("fixed_horizon", "paper_listing"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        if self.engine not in ("fast", "message"):
            raise ConfigurationError(f"unknown engine {self.engine!r}")

    @property
    def eps1(self) -> float:
        return self.eps / 4

    @property
    def eps2(self) -> float:
        return 3 * self.eps / 4

    @property
    def threshold(self) -> float:
        return 0.75 * (1 - self.eps)

    def estimation_mode(self, t_hit: float, kappa: float, n: int):
        fixed = FixedHorizon(t_hit, self.eps1, self.eps2, kappa, self.burn_const, self.sample_const)
        if self.mode == "fixed_horizon":
            return fixed
        return PaperListing(self.eps, max_rounds=fixed.horizon(n).total)


@dataclass
class ColorResult:
    sink: int
    controller: int
    kappa: float
    beta: float
    iterations: int
    eta_hat: np.ndarray
    x_hat: np.ndarray
    guaranteed: np.ndarray
    history: list = field(default_factory=list)   # (beta, max eta_hat) per iteration


@dataclass
class SolveReport:
    x_hat: np.ndarray
    guaranteed: np.ndarray
    beta_final: float
    iterations: int
    data_rounds: int
    control_rounds: int
    d_max: float
    seed: object
    eps: float
    kappa: float
    components: list = field(default_factory=list, repr=False)

    @property
    def rounds(self) -> int:
        return self.data_rounds + self.control_rounds

    @property
    def model_time(self) -> float:
        return self.rounds * self.d_max

    def residual(self, graph: WeightedGraph, b) -> tuple[np.ndarray, np.ndarray]:
        """``x_hat^T L - b^T`` and a mask of rows whose whole neighbourhood is guaranteed."""
        r = self.x_hat @ laplacian(graph) - np.asarray(b, dtype=np.float64)
        ok = np.array([self.guaranteed[u] and all(self.guaranteed[v] for v in graph.neighbors(u))
                       for u in range(graph.n)])
        return r, ok

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "x_hat": [float(v) for v in self.x_hat],
            "guaranteed": [bool(g) for g in self.guaranteed],
            "beta_final": self.beta_final,
            "iterations": self.iterations,
            "data_rounds": self.data_rounds,
            "control_rounds": self.control_rounds,
            "model_time": self.model_time,
            "seed": self.seed,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def stability_probe(eta_hat, eps: float) -> str:
    return "unstable" if float(np.max(eta_hat)) >= 0.75 * (1 - eps) else "stable"


def scale_solution(eta_hat, beta: float, b, d, sink: int | None = None) -> np.ndarray:
    """``x_u = (sum of non-sink b) / beta * eta_u / d_u``."""
    b = np.asarray(b, dtype=np.float64)
    if sink is None:
        sink = int(np.argmin(b))
    total = float(np.delete(b, sink).sum())
    return total / beta * (np.asarray(eta_hat, dtype=np.float64) / np.asarray(d, dtype=np.float64))


def canonicalize(x_hat) -> np.ndarray:
    x = np.asarray(x_hat, dtype=np.float64)
    return x - x.mean()


def split_general_b(b) -> list[OneSinkSystem]:
    """One one-sink system per negative entry; the pieces sum to ``b``.

    Piece ``i`` keeps the sink entry ``b_{v_i}`` and a ``b_{v_i} / sum(negatives)``
    share of every positive entry.
    """
    b = np.asarray(b, dtype=np.float64)
    if abs(b.sum()) > 1e-9 * max(1.0, np.abs(b).max()):
        raise OneSinkError("entries must sum to zero")
    neg = np.flatnonzero(b < 0)
    if len(neg) == 0:
        raise OneSinkError("b has no negative entry")
    if len(neg) == 1:
        return [validate_one_sink(b)]
    pos = b > 0
    neg_total = float(b[neg].sum())
    out = []
    for v in neg:
        bi = np.zeros_like(b)
        bi[pos] = (b[v] / neg_total) * b[pos]
        bi[v] = b[v]
        out.append(validate_one_sink(bi))
    return out


def _search(graph: WeightedGraph, systems: list[OneSinkSystem], controllers: list[int],
            cfg: SolverConfig, kappa: float, seed, meter: CostMeter, beta_floors: list[float]):
    """Run one rate search per colour, multiplexed on a single network."""
    ncol = len(systems)
    n = graph.n
    t_hit = cfg.t_hit if cfg.t_hit is not None else oracle.worst_hitting_time(graph)
    mode = cfg.estimation_mode(t_hit, kappa, n)
    network = Network(graph, meter=meter)
    trees = [ControlTree.bfs(graph, c) for c in controllers]

    betas = [0.5] * ncol
    iters = [1] * ncol
    rates = np.stack([source_rates(s, 0.5) for s in systems])
    kw = {"network": network} if cfg.engine == "message" else {}
    coll = make_collection(graph, [s.sink for s in systems], rates, seed, iters, engine=cfg.engine, **kw)
    active = np.ones(ncol, dtype=bool)
    results: list[ColorResult | None] = [None] * ncol
    history: list[list] = [[] for _ in range(ncol)]

    for c in range(ncol):
        control_broadcast(network, trees[c], "params", kappa)

    while active.any():
        for c in np.flatnonzero(active):
            control_broadcast(network, trees[c], "initiate", betas[c])
        used, _, _ = estimate_phase(coll, mode, active)
        if cfg.engine == "fast":
            meter.charge("data", used * ncol)
        if not coll.conservation_ok():
            raise InvariantError("packet conservation violated")
        for c in np.flatnonzero(active):
            s = systems[c]
            eta = occupancy_from_counts(coll.cnt[c], coll.T[c], s.sink)
            top = control_convergecast(network, trees[c], eta, reduce="max")
            history[c].append((betas[c], top))
            if top < cfg.threshold:
                guaranteed = kappa < eta / (1 + cfg.eps)
                x = np.where(guaranteed, scale_solution(eta, betas[c], s.b, graph.degrees, s.sink), 0.0)
                results[c] = ColorResult(s.sink, controllers[c], kappa, betas[c], iters[c], eta, x,
                                         guaranteed, history[c])
                active[c] = False
                control_broadcast(network, trees[c], "over", betas[c])
                continue
            betas[c] /= 2
            iters[c] += 1
            if betas[c] < beta_floors[c]:
                raise SolverError(
                    f"rate search for sink {s.sink} reached beta={betas[c]:.3g} below the floor "
                    f"{beta_floors[c]:.3g} without a stable estimate")
            coll.reset_color(c, source_rates(s, betas[c]), iters[c])
    return results


def _floor(graph, system) -> float:
    return oracle.spectral_rate_bound(graph, system.sink, system.J) / 16


def drw_lsolve(graph: WeightedGraph, b, eps: float, kappa: float, seed, *,
               controller: int | None = None, **opts) -> SolveReport:
    """Solve a one-sink system ``x^T L = b^T``; the controller defaults to the sink."""
    system = b if isinstance(b, OneSinkSystem) else validate_one_sink(b, graph.n)
    cfg = SolverConfig(eps, kappa, **opts)
    meter = CostMeter(graph.d_max)
    ctrl = system.sink if controller is None else int(controller)
    (res,) = _search(graph, [system], [ctrl], cfg, kappa, seed, meter, [_floor(graph, system)])
    return SolveReport(x_hat=res.x_hat, guaranteed=res.guaranteed, beta_final=res.beta,
                       iterations=res.iterations, data_rounds=meter.data_rounds,
                       control_rounds=meter.control_rounds, d_max=graph.d_max, seed=seed,
                       eps=eps, kappa=kappa, components=[res])


def gen_drw_lsolve(graph: WeightedGraph, b, eps: float, kappa: float, seed, **opts) -> SolveReport:
    """Solve ``x^T L = b^T`` for any zero-sum ``b`` with ``l`` negative entries.

    Each one-sink piece runs its own rate search at granularity ``kappa / l``;
    all searches finish before the pieces are summed.
    """
    systems = split_general_b(b)
    if len(systems) > graph.n - 1:
        raise ConfigurationError("too many negative entries")
    cfg = SolverConfig(eps, kappa, **opts)
    meter = CostMeter(graph.d_max)
    ell = len(systems)
    results = _search(graph, systems, [s.sink for s in systems], cfg, kappa / ell, seed, meter,
                      [_floor(graph, s) for s in systems])
    x = np.sum([r.x_hat for r in results], axis=0)
    guaranteed = np.array([all(r.guaranteed[u] or u == r.sink for r in results) for u in range(graph.n)])
    return SolveReport(x_hat=x, guaranteed=guaranteed, beta_final=min(r.beta for r in results),
                       iterations=max(r.iterations for r in results), data_rounds=meter.data_rounds,
                       control_rounds=meter.control_rounds, d_max=graph.d_max, seed=seed,
                       eps=eps, kappa=kappa, components=results)


@dataclass
class ResistanceEstimate:
    estimate: float
    kappa: float
    report: SolveReport


def resistance_kappa(graph: WeightedGraph) -> float:
    return 3 * graph.d_min / (16 * graph.d_max)


def effective_resistance(graph: WeightedGraph, u: int, v: int, eps: float, seed, **opts) -> ResistanceEstimate:
    """Estimate ``R(u, v)`` with the source ``u`` acting as controller."""
    if u == v:
        raise ConfigurationError("endpoints must differ")
    if not 0 < eps < 0.5:
        raise ConfigurationError("eps must lie in (0, 1/2)")
    b = np.zeros(graph.n)
    b[u], b[v] = 1.0, -1.0
    kappa = resistance_kappa(graph)
    rep = drw_lsolve(graph, b, eps, kappa, seed, controller=u, **opts)
    if not rep.guaranteed[u]:
        raise InvariantError(f"source coordinate {u} was not guaranteed at kappa={kappa:.4g}")
    return ResistanceEstimate(estimate=float(rep.x_hat[u] - rep.x_hat[v]), kappa=kappa, report=rep)


def predicted_rounds(graph: WeightedGraph, kappa: float, eps: float, t_hit: float,
                     burn_const: float = 64.0, sample_const: float = 4.0) -> float:
    """Per-iteration horizon times the iteration bound ``log2(16 d_max / (3 lambda_2))``."""
    h = window_horizon(t_hit, graph.n, eps / 4, 3 * eps / 4, kappa, burn_const, sample_const)
    lam = oracle.lambda2(laplacian(graph))
    return h.total * math.log2(16 * graph.d_max / (3 * lam))
