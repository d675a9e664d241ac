"""``netmarket`` command line.

Exit codes: 0 ok, 1 usage, 2 unreadable input, 3 empty result,
4 supply/demand imbalance, 5 disconnected or infeasible network.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .alpha import build_transport, extract_power_diagram, probe_transport
from .applications import aggregate_demand, balance_regions, rank_quality
from .equilibrium import build_market, inverse_prices
from .errors import (Disconnected, EmptyArea, EmptyGraph, EmptyRegionSide, Infeasible,
                     NetMarketError, Unbalanced)
from .geo import SnapIndex, lines_to_graph, parse_lines
from .graph import largest_component, weak_components
from .io import read_buyers, read_graph, read_sellers, write_graph, write_table
from .mcf import FlowProblem, verify_slackness
from .synth import grid_network, random_agents

log = logging.getLogger("netmarket")

EXIT_USAGE, EXIT_PARSE, EXIT_EMPTY, EXIT_IMBALANCE, EXIT_DISCONNECTED = 1, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive(text: str) -> float:
    x = float(text)
    if not (x > 0 and math.isfinite(x)):
        raise argparse.ArgumentTypeError(f"must be a positive number, got {text!r}")
    return x


def _nonnegative(text: str) -> float:
    x = float(text)
    if not (x >= 0 and math.isfinite(x)):
        raise argparse.ArgumentTypeError(f"must be >= 0, got {text!r}")
    return x


def _alpha(text: str) -> float:
    x = float(text)
    if not (x >= 1 and math.isfinite(x)):
        raise argparse.ArgumentTypeError(f"alpha must be >= 1, got {text!r}")
    return x


def _count(text: str) -> int:
    x = int(text)
    if x < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text!r}")
    return x


def _agents(args, g, *, require_region=False):
    index = SnapIndex.from_graph(g)
    buyers = read_buyers(args.buyers, index, require_region=require_region)
    sellers = read_sellers(args.sellers, index, require_region=require_region)
    return buyers, sellers


def cmd_build_graph(args) -> int:
    with open(args.input, "rb") as fh:
        data = fh.read()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lines = parse_lines(data, args.format)
    for w in caught:
        log.warning("%s", w.message)
    if not lines:
        raise EmptyGraph("no line features in input")
    g = lines_to_graph(lines, snap_tol=args.snap_tol, per_km_cost=args.per_km_cost)
    if args.largest_component:
        g, _ = largest_component(g)
    if g.node_count == 0:
        raise EmptyGraph("no nodes after construction")
    write_graph(g, args.out)
    count, _ = weak_components(g)
    print(f"nodes={g.node_count}, arcs={g.arc_count}, components={count}")
    return 0


def cmd_solve(args) -> int:
    g = read_graph(args.graph)
    buyers, sellers = _agents(args, g)
    m = build_market(g, buyers, sellers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if m.mode == "forward":
        report = aggregate_demand(m)
        rows = ((i, b.node, report.chosen_label(i) or "outside", report.price[i])
                for i, b in enumerate(m.buyers))
        write_table(out / "buyers.csv", ("buyer", "node", "chosen_seller", "delivered_price"), rows)
        write_table(out / "demand.csv", ("label", "demand"),
                    [*zip(report.seller_labels, report.seller_demand), ("outside", report.outside_mass)])
        print(f"mode=forward buyers={len(m.buyers)} outside_mass={report.outside_mass:.12g}")
        return 0

    prices, sol = inverse_prices(m)
    cert = verify_slackness(FlowProblem(m.graph, m.excess), sol, args.tol)
    write_table(out / "sellers.csv", ("label", "node", "price", "quality"),
                ((s.label, s.node, p, -p) for s, p in zip(m.sellers, prices.seller_price)))
    gm = m.graph
    write_table(out / "flows.csv", ("arc", "tail", "head", "flow"),
                ((a, gm.tail[a], gm.head[a], sol.flow[a]) for a in np.flatnonzero(sol.flow > 0)))
    print(f"mode=inverse total_cost={sol.total_cost:.12g} optimal={'yes' if cert.optimal else 'no'} "
          f"max_dual_violation={cert.max_dual_violation:.3g} max_support_gap={cert.max_support_gap:.3g}")
    if not cert.optimal:
        log.warning("slackness certificate failed at tol %g", args.tol)
    return 0


def cmd_alpha_match(args) -> int:
    g = read_graph(args.graph)
    buyers, sellers = _agents(args, g)
    tp = build_transport(g, buyers, sellers, args.alpha)
    degenerate, plans = probe_transport(tp, tol=args.tol)
    plan = plans[0]
    diagram = extract_power_diagram(plan, tp.demand)
    w = plan.weights.tocoo()
    order = np.lexsort((w.col, w.row))
    write_table(args.out, ("buyer", "seller", "weight"),
                ((int(w.row[k]), sellers[w.col[k]].label, w.data[k]) for k in order))
    print(f"total_cost={plan.total_cost:.12g}")
    print(f"split_count={diagram.split_count}")
    print(f"degenerate: {'yes' if degenerate else 'no'}")
    return 0


def cmd_rank(args) -> int:
    g = read_graph(args.graph)
    buyers, sellers = _agents(args, g, require_region=True)
    if args.balance:
        buyers, bal = balance_regions(buyers, sellers)
        for r, k in bal.scale.items():
            log.info("region %s scale %.12g", r, k)
    m = build_market(g, buyers, sellers, "inverse")
    ranking = rank_quality(m, threads=args.threads)
    write_table(args.out, ("label", "region", "quality", "rank"), ranking.rows())
    print(f"sellers={len(sellers)} regions={len(set(ranking.regions))}")
    return 0


def cmd_synth(args) -> int:
    g = grid_network(args.rows, args.cols, seed=args.seed, integer_costs=not args.continuous,
                     per_km_cost=args.per_km_cost)
    ag = random_agents(g.node_count, args.sellers, args.units, seed=args.seed)
    out = Path(args.out)
    write_graph(g, out)
    write_table(out / "buyers.csv", ("node", "mass"), zip(ag.buyer_nodes, ag.demand))
    write_table(out / "sellers.csv", ("label", "node", "supply"),
                ((f"s{i}", v, s) for i, (v, s) in enumerate(zip(ag.seller_nodes, ag.supply))))
    print(f"nodes={g.node_count}, arcs={g.arc_count}, sellers={args.sellers}, units={args.units}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="netmarket", description="Spatial market equilibria on road networks.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build-graph", help="build a road graph from line features")
    b.add_argument("input")
    b.add_argument("--format", choices=("geojson", "csv-edges"), default="geojson")
    b.add_argument("--snap-tol", type=_nonnegative, default=1.0, help="merge radius in metres (default 1)")
    b.add_argument("--per-km-cost", type=_positive, default=1.0, help="cost per km of road (default 1)")
    b.add_argument("--largest-component", action="store_true", help="keep only the largest weak component")
    b.add_argument("-o", "--out", required=True, help="output directory")
    b.set_defaults(func=cmd_build_graph)

    def agent_args(q):
        q.add_argument("graph", help="graph directory (nodes.csv, arcs.csv)")
        q.add_argument("--buyers", required=True)
        q.add_argument("--sellers", required=True)
        q.add_argument("--tol", type=_nonnegative, default=1e-9)
        q.add_argument("--threads", type=_count, default=1)

    s = sub.add_parser("solve", help="forward demand or inverse prices")
    agent_args(s)
    s.add_argument("-o", "--out", required=True, help="output directory")
    s.set_defaults(func=cmd_solve)

    a = sub.add_parser("alpha-match", help="powered-distance matching with degeneracy report")
    agent_args(a)
    a.add_argument("--alpha", type=_alpha, default=1.0)
    a.add_argument("-o", "--out", required=True, help="plan CSV")
    a.set_defaults(func=cmd_alpha_match)

    r = sub.add_parser("rank", help="regional quality ranking from observed volumes")
    agent_args(r)
    r.add_argument("--balance", action="store_true", help="rescale buyer mass to regional supply")
    r.add_argument("-o", "--out", required=True, help="ranking CSV")
    r.set_defaults(func=cmd_rank)

    y = sub.add_parser("synth", help="seeded random grid network with agents")
    y.add_argument("--rows", type=_count, required=True)
    y.add_argument("--cols", type=_count, required=True)
    y.add_argument("--sellers", type=_count, required=True)
    y.add_argument("--units", type=_count, required=True)
    y.add_argument("--seed", type=int, default=0)
    y.add_argument("--continuous", action="store_true", help="haversine costs instead of integers 1..10")
    y.add_argument("--per-km-cost", type=_positive, default=1.0)
    y.add_argument("-o", "--out", required=True, help="output directory")
    y.set_defaults(func=cmd_synth)
    return p


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (Unbalanced, EmptyRegionSide)):
        return EXIT_IMBALANCE
    if isinstance(exc, (Disconnected, Infeasible)):
        return EXIT_DISCONNECTED
    if isinstance(exc, (EmptyGraph, EmptyArea)):
        return EXIT_EMPTY
    return EXIT_PARSE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(logging.DEBUG if args.verbose else logging.INFO)
    log.propagate = False
    try:
        return args.func(args)
    except NetMarketError as exc:
        log.error("error: %s", exc)
        return exit_code(exc)
    except OSError as exc:
        log.error("error: %s", exc)
        return EXIT_PARSE
    except ValueError as exc:
        # Parameter combinations argparse cannot see, e.g. more sellers than nodes.
        log.error("error: %s", exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
