"""Command-line harness: build graphs, run solves and samplers, compare to oracles.

Every command writes UTF-8 JSON (or CSV for ``bench``) carrying a versioned
``schema`` field. Output depends only on the arguments, so repeated runs are
byte-identical.

Exit codes: 0 success, 2 usage error, 3 invalid input, 4 internal invariant
violation.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
from collections import Counter
from pathlib import Path

import numpy as np

from . import __version__, oracle, rst, solver
from .engine import InvariantError
from .graph import GenerationError, WeightedGraph, build_generator, laplacian, path, read_edge_list, validate_one_sink

log = logging.getLogger("queuesolve")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_INTERNAL = 0, 2, 3, 4

_ALIASES = {"tree": "binary_tree", "er": "erdos_renyi", "k": "complete", "c": "cycle", "p": "path"}


class UsageError(Exception):
    pass


def parse_graph(spec: str, seed: int) -> WeightedGraph:
    """``edge``, ``k3``, ``c4``, ``path:10``, ``grid:4`` or ``grid:3x4``, ``tree:7``,
    ``er:20:0.3``, ``file:g.txt``."""
    if spec == "edge":
        return path(2)
    if spec.startswith("file:"):
        return read_edge_list(spec[5:])
    m = re.fullmatch(r"([kcp])(\d+)", spec)
    if m:
        return build_generator(_ALIASES[m.group(1)], int(m.group(2)))
    kind, *params = spec.split(":")
    kind = _ALIASES.get(kind, kind)
    if kind == "grid" and len(params) == 1 and "x" in params[0]:
        params = params[0].split("x")
    try:
        values = [float(p) if "." in p else int(p) for p in params]
    except ValueError:
        raise UsageError(f"bad graph parameters in {spec!r}") from None
    return build_generator(kind, *values, seed=seed)


def parse_b(spec: str, n: int) -> np.ndarray:
    """``endpoints`` (e_0 - e_{n-1}), ``file:path`` (whitespace separated) or ``1,0,-1``."""
    if spec == "endpoints":
        b = np.zeros(n)
        b[0], b[-1] = 1.0, -1.0
        return b
    text = Path(spec[5:]).read_text() if spec.startswith("file:") else spec.replace(",", " ")
    try:
        b = np.array([float(t) for t in text.split()])
    except ValueError:
        raise UsageError(f"cannot parse b from {spec!r}") from None
    if len(b) != n:
        raise UsageError(f"b has {len(b)} entries, graph has {n} vertices")
    return b


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1) + "\n"


def _rel(est, exact):
    return None if exact == 0 else abs(est - exact) / abs(exact)


def _solver_opts(args) -> dict:
    return {"mode": args.mode, "engine": args.engine, "t_hit": args.t_hit,
            "burn_const": args.burn_const, "sample_const": args.sample_const}


def superposed_exact(graph: WeightedGraph, b) -> np.ndarray:
    """Sum of the sink-pinned oracle solutions of the one-sink pieces of ``b``."""
    return np.sum([oracle.exact_solve(graph, s).x for s in solver.split_general_b(b)], axis=0)


# -- commands -------------------------------------------------------------------------

def cmd_solve(args) -> str:
    g = parse_graph(args.graph, args.seed)
    b = parse_b(args.b, g.n)
    negatives = int(np.sum(b < 0))
    if negatives == 1:
        rep = solver.drw_lsolve(g, validate_one_sink(b, g.n), args.eps, args.kappa, args.seed,
                                **_solver_opts(args))
    else:
        rep = solver.gen_drw_lsolve(g, b, args.eps, args.kappa, args.seed, **_solver_opts(args))
    exact = superposed_exact(g, b)
    out = rep.to_dict()
    out["exact"] = [float(v) for v in exact]
    out["rel_error"] = [_rel(e, x) for e, x in zip(rep.x_hat, exact)]
    out["graph"] = args.graph
    out["sinks"] = negatives
    return _dump(out)


def cmd_reff(args) -> str:
    g = parse_graph(args.graph, args.seed)
    u, v = args.u, (g.n - 1 if args.v is None else args.v)
    if not (0 <= u < g.n and 0 <= v < g.n):
        raise UsageError("endpoint out of range")
    est = solver.effective_resistance(g, u, v, args.eps, args.seed, **_solver_opts(args))
    exact = oracle.effective_resistance_exact(g, u, v)
    return _dump({
        "schema": "queuesolve.reff/1", "graph": args.graph, "u": u, "v": v, "seed": args.seed,
        "estimate": est.estimate, "exact": exact, "rel_error": _rel(est.estimate, exact),
        "kappa": est.kappa, "rounds": est.report.rounds, "model_time": est.report.model_time,
    })


def cmd_rst(args) -> str:
    g = parse_graph(args.graph, args.seed)
    counts: Counter = Counter()
    out_dir = Path(args.out_dir) if args.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    rounds, parts = [], []
    for r in range(args.reps):
        seed = [args.seed, r]
        res = rst.sample_rst(g, seed, eps=args.eps, phi=args.phi, exits=args.exits,
                             entry_conditioned=args.entry_conditioned)
        counts[res.tree.edges] += 1
        rounds.append(res.rounds)
        parts.append(res.decomposition.k)
        if out_dir:
            (out_dir / f"tree_{r}.txt").write_text(res.tree.to_text())
            (out_dir / f"tree_{r}.json").write_text(_dump(res.metadata()))
        log.info("rep %d: %d partitions, %d cut edges", r, res.decomposition.k,
                 len(res.decomposition.cut_edges))
    total = oracle.spanning_tree_count(g)
    table = [{"edges": [list(e) for e in t], "count": c, "frequency": c / args.reps}
             for t, c in sorted(counts.items())]
    return _dump({
        "schema": rst.SCHEMA, "graph": args.graph, "seed": args.seed, "reps": args.reps,
        "phi": args.phi if args.phi is not None else 1 / math.sqrt(g.n), "epsilon": args.eps,
        "exits": args.exits, "entry_conditioned": args.entry_conditioned,
        "spanning_trees": total, "uniform_frequency": 1 / total if total else None,
        "distinct_trees": len(counts), "trees": table,
        "mean_rounds": float(np.mean(rounds)), "mean_partitions": float(np.mean(parts)),
    })


def cmd_decompose(args) -> str:
    g = parse_graph(args.graph, args.seed)
    phi = args.phi if args.phi is not None else 1 / math.sqrt(g.n)
    d = rst.decompose(g, phi, args.seed)
    return _dump({
        "schema": "queuesolve.decompose/1", "graph": args.graph, "seed": args.seed, "phi": phi,
        "partition": [int(p) for p in d.part], "leaders": d.leaders,
        "cut_edges": [[int(u), int(v)] for u, v, _ in d.cut_edges],
        "cut_fraction": len(d.cut_edges) / g.m, "diameters": d.diameters, "rounds": d.rounds,
    })


BENCH_SCHEMA = "queuesolve.bench/1"
BENCH_FIELDS = ["schema", "family", "n", "rounds", "control_rounds", "model_time", "t_hit",
                "iterations", "predicted_horizon", "ratio"]


def bench_rows(family: str, sizes, eps: float, kappa: float, seed: int,
               burn_const: float = 64.0, sample_const: float = 4.0) -> list[dict]:
    rows = []
    for n in sizes:
        g = build_generator(family, n)
        b = np.zeros(n)
        b[0], b[-1] = 1.0, -1.0
        t_hit = oracle.worst_hitting_time(g)
        rep = solver.drw_lsolve(g, b, eps, kappa, seed, t_hit=t_hit, burn_const=burn_const,
                                sample_const=sample_const)
        pred = solver.predicted_rounds(g, kappa, eps, t_hit, burn_const, sample_const)
        rows.append({"schema": BENCH_SCHEMA, "family": family, "n": n, "rounds": rep.data_rounds,
                     "control_rounds": rep.control_rounds, "model_time": rep.model_time,
                     "t_hit": t_hit, "iterations": rep.iterations, "predicted_horizon": pred,
                     "ratio": rep.data_rounds / pred})
    return rows


def loglog_slope(xs, ys) -> float:
    return float(np.polyfit(np.log(xs), np.log(ys), 1)[0])


def cmd_bench(args) -> str:
    sizes = [int(s) for s in args.sizes.split(",") if s.strip()] if args.sizes else []
    if not sizes:
        raise UsageError("bench needs a non-empty --sizes list")
    family = _ALIASES.get(args.family, args.family)
    rows = bench_rows(family, sizes, args.eps, args.kappa, args.seed, args.burn_const, args.sample_const)
    if len(sizes) > 1:
        log.info("log-log slope of rounds against n: %.3f", loglog_slope(sizes, [r["rounds"] for r in rows]))
    log.info("max rounds/predicted ratio: %.3f", max(r["ratio"] for r in rows))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def cmd_oracle(args) -> str:
    g = parse_graph(args.graph, args.seed)
    q = args.quantity
    out = {"schema": "queuesolve.oracle/1", "graph": args.graph, "quantity": q}
    if q == "solve":
        b = parse_b(args.b, g.n)
        out["x"] = [float(v) for v in superposed_exact(g, b)]
        out["canonical"] = [float(v) for v in solver.canonicalize(out["x"])]
    elif q in ("occupancy", "beta_star", "rate_bound"):
        s = validate_one_sink(parse_b(args.b, g.n), g.n)
        if q == "occupancy":
            occ = oracle.exact_occupancy(g, s.sink, s.J, args.beta)
            out.update(beta=args.beta, eta=[float(v) for v in occ.eta], unstable=occ.unstable)
        elif q == "beta_star":
            out["beta_star"] = oracle.exact_beta_star(g, s.sink, s.J)
        else:
            out["bound"] = oracle.spectral_rate_bound(g, s.sink, s.J)
    elif q == "hitting":
        out["t_hit"] = oracle.worst_hitting_time(g)
        if args.target is not None:
            out["h"] = [float(v) for v in oracle.hitting_times(g, args.target)]
    elif q == "reff":
        v = g.n - 1 if args.v is None else args.v
        out.update(u=args.u, v=v, resistance=oracle.effective_resistance_exact(g, args.u, v))
    elif q == "lambda2":
        out["lambda2"] = oracle.lambda2(laplacian(g))
    elif q == "trees":
        out["count"] = oracle.spanning_tree_count(g)
        if g.n <= 8 and g.m <= 16:
            out["trees"] = [[list(e) for e in t] for t in oracle.enumerate_spanning_trees(g)]
    return _dump(out)


# -- argument parsing ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="queuesolve", description=__doc__.splitlines()[0], allow_abbrev=False)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, seed=True):
        sp.add_argument("--graph", required=True, help="edge, k3, c4, path:10, grid:4, tree:7, er:n:p, file:PATH")
        sp.add_argument("--seed", type=int, required=seed, default=0)
        sp.add_argument("--output", "-o", help="write to this file instead of stdout")

    def solver_flags(sp, kappa=True):
        sp.add_argument("--eps", type=float, default=0.1)
        if kappa:
            sp.add_argument("--kappa", type=float, default=0.01)
        sp.add_argument("--mode", choices=["fixed_horizon", "paper_listing"], default="fixed_horizon")
        sp.add_argument("--engine", choices=["fast", "message"], default="fast")
        sp.add_argument("--t-hit", type=float, default=None, help="hitting-time bound (default: oracle)")
        sp.add_argument("--burn-const", type=float, default=64.0)
        sp.add_argument("--sample-const", type=float, default=4.0)

    sp = sub.add_parser("solve", help="solve x^T L = b^T")
    common(sp)
    sp.add_argument("--b", default="endpoints")
    solver_flags(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("reff", help="effective resistance between two vertices")
    common(sp)
    sp.add_argument("--u", type=int, default=0)
    sp.add_argument("--v", type=int, default=None, help="default: last vertex")
    solver_flags(sp, kappa=False)
    sp.set_defaults(func=cmd_reff)

    sp = sub.add_parser("rst", help="sample random spanning trees")
    common(sp)
    sp.add_argument("--reps", type=int, default=1)
    sp.add_argument("--phi", type=float, default=None, help="default 1/sqrt(n)")
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--exits", choices=["oracle", "solver"], default="oracle")
    sp.add_argument("--entry-conditioned", action="store_true")
    sp.add_argument("--out-dir", help="write tree_<rep>.txt and tree_<rep>.json here")
    sp.set_defaults(func=cmd_rst)

    sp = sub.add_parser("decompose", help="exponential-shift clustering")
    common(sp)
    sp.add_argument("--phi", type=float, default=None)
    sp.set_defaults(func=cmd_decompose)

    sp = sub.add_parser("bench", help="round counts across graph sizes (CSV)")
    sp.add_argument("--family", choices=["path", "complete", "star", "grid", "cycle", "tree"], required=True)
    sp.add_argument("--sizes", default="", help="comma separated, e.g. 8,16,32")
    sp.add_argument("--seed", type=int, required=True)
    sp.add_argument("--output", "-o")
    sp.add_argument("--eps", type=float, default=0.1)
    sp.add_argument("--kappa", type=float, default=0.5)
    sp.add_argument("--burn-const", type=float, default=64.0)
    sp.add_argument("--sample-const", type=float, default=4.0)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("oracle", help="exact reference quantities")
    common(sp, seed=False)
    sp.add_argument("quantity", choices=["solve", "occupancy", "beta_star", "rate_bound", "hitting",
                                         "reff", "lambda2", "trees"])
    sp.add_argument("--b", default="endpoints")
    sp.add_argument("--beta", type=float, default=0.25)
    sp.add_argument("--target", type=int, default=None)
    sp.add_argument("--u", type=int, default=0)
    sp.add_argument("--v", type=int, default=None)
    sp.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        text = args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"queuesolve: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InvariantError, oracle.SingularSystemError) as exc:
        print(f"queuesolve: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ValueError, GenerationError, OSError) as exc:
        print(f"queuesolve: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
