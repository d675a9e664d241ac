"""Market instances and their equilibrium prices.

A market lives on a road graph plus one extra node, the outside option,
appended as the last node id. It is a zero-price seller with an arc of cost
``u_v`` toward every buyer node ``v`` that has a finite reservation utility.

Forward mode takes seller prices as given and lets buyers pick the cheapest
delivered price. Inverse mode takes observed seller volumes and recovers the
prices that make those volumes an equilibrium, as duals of a transshipment.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from .errors import MixedSellerModes, ModeMismatch, TauOutOfRange, Unbalanced, UnknownNode
from .graph import Graph
from .mcf import BALANCE_TOL, FlowProblem, FlowSolution, solve_mcf
from .paths import LabelTree, Seed, dijkstra

__all__ = [
    "Buyer",
    "Market",
    "PriceVector",
    "Seller",
    "build_market",
    "buyer_choices",
    "forward_prices",
    "iceberg_costs",
    "iceberg_prices",
    "inverse_prices",
    "split_node",
]

Mode = Literal["forward", "inverse"]


@dataclass(frozen=True)
class Buyer:
    node: int
    mass: float
    reservation_utility: float = math.inf
    region: str | None = None

    def __post_init__(self):
        if not (self.mass > 0 and math.isfinite(self.mass)):
            raise ValueError(f"buyer mass must be positive and finite, got {self.mass!r}")
        if math.isnan(self.reservation_utility) or self.reservation_utility < 0:
            raise ValueError(f"reservation utility must be >= 0, got {self.reservation_utility!r}")


@dataclass(frozen=True)
class Seller:
    node: int
    label: str
    price: float | None = None
    observed_supply: float | None = None
    region: str | None = None

    def __post_init__(self):
        if self.price is not None and not math.isfinite(self.price):
            raise ValueError(f"seller {self.label!r}: price must be finite")
        if self.observed_supply is not None and not (
                self.observed_supply >= 0 and math.isfinite(self.observed_supply)):
            raise ValueError(f"seller {self.label!r}: observed supply must be finite and >= 0")

    @property
    def mode(self) -> Mode | None:
        if (self.price is None) == (self.observed_supply is None):
            return None
        return "forward" if self.price is not None else "inverse"


@dataclass(frozen=True)
class Market:
    """A road graph extended with the outside-option node.

    ``graph`` is ``base`` plus node ``outside_node`` (always the last id) and
    one arc ``outside_node -> buyer.node`` per buyer with finite reservation
    utility, appended after the road arcs.
    """

    graph: Graph
    base: Graph
    buyers: tuple[Buyer, ...]
    sellers: tuple[Seller, ...]
    mode: Mode
    outside_node: int
    excess: np.ndarray | None = field(default=None, repr=False)

    @property
    def outside_arcs(self) -> range:
        return range(self.base.arc_count, self.graph.arc_count)


@dataclass(frozen=True)
class PriceVector:
    """Delivered price at every market node plus one price per seller.

    Prices are anchored so the outside node sits at 0.
    """

    node_price: np.ndarray
    seller_price: np.ndarray
    anchor: int
    road_price: np.ndarray | None = field(default=None, repr=False)
    road_origin: np.ndarray | None = field(default=None, repr=False)

    def __getitem__(self, v: int) -> float:
        return float(self.node_price[v])


def _infer_mode(sellers: Sequence[Seller], mode: Mode | None) -> Mode:
    modes = {s.mode for s in sellers}
    if None in modes or len(modes) > 1:
        raise MixedSellerModes("every seller needs exactly one of price / observed_supply, "
                               "and all sellers must use the same one")
    found = modes.pop() if modes else mode
    if found is None:
        raise MixedSellerModes("cannot infer the market mode from an empty seller list")
    if mode is not None and mode != found:
        raise MixedSellerModes(f"market mode {mode!r} but sellers carry "
                               f"{'prices' if found == 'forward' else 'observed supplies'}")
    return found


def build_market(g: Graph, buyers: Sequence[Buyer], sellers: Sequence[Seller],
                 mode: Mode | None = None) -> Market:
    """Append the outside node and its arcs; in inverse mode also fix the excess vector.

    In inverse mode the outside node supplies whatever demand the observed
    sellers leave uncovered, so supply above total demand raises
    :class:`Unbalanced`.
    """
    buyers, sellers = tuple(buyers), tuple(sellers)
    mode = _infer_mode(sellers, mode)
    n = g.node_count
    for agent in (*buyers, *sellers):
        if not 0 <= agent.node < n:
            raise UnknownNode(agent.node)

    outside = n
    priced = [b for b in buyers if math.isfinite(b.reservation_utility)]
    tail = np.concatenate([g.tail, np.full(len(priced), outside, dtype=np.int64)])
    head = np.concatenate([g.head, np.array([b.node for b in priced], dtype=np.int64)])
    cost = np.concatenate([g.cost, np.array([b.reservation_utility for b in priced])])
    lon = np.append(g.lon, 0.0)
    lat = np.append(g.lat, 0.0)
    node_tags = None if g.node_tags is None else [*g.node_tags, {"role": "outside"}]
    arc_tags = None if g.arc_tags is None else [*g.arc_tags, *({} for _ in priced)]
    graph = Graph(lon, lat, tail, head, cost, node_tags, arc_tags)

    excess = None
    if mode == "inverse":
        excess = np.zeros(n + 1)
        for s in sellers:
            excess[s.node] += s.observed_supply
        for b in buyers:
            excess[b.node] -= b.mass
        residual = -math.fsum(excess[:n].tolist())
        scale = max(1.0, float(np.abs(excess).sum()) / 2)
        if residual < -BALANCE_TOL * scale:
            raise Unbalanced(residual)
        excess[outside] = max(residual, 0.0)
    return Market(graph, g, buyers, sellers, mode, outside, excess)


def forward_prices(m: Market) -> tuple[PriceVector, LabelTree]:
    """Cheapest delivered price everywhere, with sellers at their posted prices.

    Sellers seed one multi-source search at their prices; the outside node
    sits at 0 and its arcs end at buyer nodes, so at a buyer node ``v`` the
    price is ``min(u_v, min_w p_w + d(w, v))``. The outside option never
    travels past the buyer it belongs to. ``tree.origin[v]`` is the winning
    seller's index, or ``len(m.sellers)`` for the outside option. Equal
    prices go to real sellers, then to the smaller seller index.
    """
    if m.mode != "forward":
        raise ModeMismatch("forward_prices needs a forward-mode market")
    outside = len(m.sellers)
    seller_price = np.array([s.price for s in m.sellers], dtype=np.float64)
    if m.sellers:
        road = dijkstra(m.base, [Seed(s.node, s.price, i) for i, s in enumerate(m.sellers)])
        dist, parent, origin = road.dist, road.parent, road.origin
    else:
        n = m.base.node_count
        dist, parent, origin = np.full(n, np.inf), np.full(n, -1), np.full(n, -1)
    road_price = np.append(dist, 0.0)
    road_origin = np.append(origin, outside)
    dist = road_price.copy()
    origin = road_origin.copy()
    parent = np.append(parent, -1)
    g = m.graph
    for a in m.outside_arcs:
        v = g.head[a]
        if g.cost[a] < dist[v] or (g.cost[a] == dist[v] and origin[v] == outside and a < parent[v]):
            dist[v] = g.cost[a]
            parent[v] = a
            origin[v] = outside
    tree = LabelTree(dist, parent, origin, "forward")
    return PriceVector(dist, seller_price, m.outside_node, road_price, road_origin), tree


def buyer_choices(m: Market, prices: PriceVector) -> tuple[np.ndarray, np.ndarray]:
    """Per buyer: chosen seller index (``len(m.sellers)`` for outside) and price paid.

    A buyer leaves only if its own reservation utility is strictly below the
    best delivered seller price at its node. A buyer no seller can reach and
    without a finite reservation utility buys nothing: it is reported as
    outside with price ``inf``.
    """
    outside = len(m.sellers)
    choice = np.empty(len(m.buyers), dtype=np.int64)
    paid = np.empty(len(m.buyers))
    for i, b in enumerate(m.buyers):
        road = prices.road_price[b.node]
        if b.reservation_utility < road or math.isinf(road):
            choice[i], paid[i] = outside, b.reservation_utility
        else:
            choice[i], paid[i] = prices.road_origin[b.node], road
    return choice, paid


def inverse_prices(m: Market) -> tuple[PriceVector, FlowSolution]:
    """Prices under which the observed seller volumes clear the market."""
    if m.mode != "inverse":
        raise ModeMismatch("inverse_prices needs an inverse-mode market")
    problem = FlowProblem(m.graph, m.excess)
    sol = solve_mcf(problem, reference=m.outside_node)
    p = sol.potential
    seller_price = np.array([p[s.node] for s in m.sellers], dtype=np.float64)
    return PriceVector(p, seller_price, m.outside_node), sol


def iceberg_costs(taus) -> np.ndarray:
    """Additive arc costs ``-log(1 - tau)`` for melt fractions ``tau`` in ``[0, 1)``."""
    taus = np.asarray(taus, dtype=np.float64)
    bad = ~((taus >= 0) & (taus < 1))
    if bad.any():
        i = int(np.flatnonzero(bad.ravel())[0])
        raise TauOutOfRange(f"tau[{i}] = {taus.ravel()[i]!r} is outside [0, 1)")
    return -np.log1p(-taus)


def iceberg_prices(potential, reference: int) -> np.ndarray:
    """Multiplicative prices from potentials on iceberg costs; ``reference`` gets price 1."""
    potential = np.asarray(potential, dtype=np.float64)
    return np.exp(potential - potential[reference])


def split_node(m: Market, node: int, groups: Sequence[tuple[float, float]]) -> Market:
    """Replace the buyers at ``node`` by one replica node per ``(mass, u)`` group.

    Each replica copies every road arc incident to ``node`` and gets its own
    outside-option arc priced at the group's reservation utility. The
    original node stays in the network as a plain junction.
    """
    if not groups:
        raise ValueError("need at least one group")
    here = [b for b in m.buyers if b.node == node]
    if not here or any(s.node == node for s in m.sellers):
        raise UnknownNode(node, f"node {node} is not a buyer-only node")
    g = m.base
    n = g.node_count
    k = len(groups)
    replicas = np.arange(n, n + k, dtype=np.int64)

    out_arcs = g.out_arcs(node)
    in_arcs = g.in_arcs(node)
    tails, heads, costs = [g.tail], [g.head], [g.cost]
    arc_tags = None if g.arc_tags is None else list(g.arc_tags)
    for r in replicas:
        tails += [np.full(out_arcs.size, r), g.tail[in_arcs]]
        heads += [g.head[out_arcs], np.full(in_arcs.size, r)]
        costs += [g.cost[out_arcs], g.cost[in_arcs]]
        if arc_tags is not None:
            arc_tags += [g.arc_tags[a] for a in out_arcs] + [g.arc_tags[a] for a in in_arcs]
    node_tags = None if g.node_tags is None else [*g.node_tags, *(g.node_tags[node] for _ in replicas)]
    base = Graph(np.append(g.lon, np.full(k, g.lon[node])), np.append(g.lat, np.full(k, g.lat[node])),
                 np.concatenate(tails), np.concatenate(heads), np.concatenate(costs),
                 node_tags, arc_tags)

    region = here[0].region
    split = [Buyer(int(r), float(mass), float(u), region) for r, (mass, u) in zip(replicas, groups)]
    buyers = []
    for b in m.buyers:
        if b.node != node:
            buyers.append(b)
        elif b is here[0]:
            buyers.extend(split)
    return build_market(base, buyers, m.sellers, m.mode)


def with_buyers(m: Market, buyers: Sequence[Buyer]) -> Market:
    """Same road graph and sellers, different buyers."""
    return build_market(m.base, buyers, m.sellers, m.mode)


def scaled(m: Market, k: float) -> Market:
    """Every arc cost, outside-option arcs included, multiplied by ``k > 0``."""
    if not k > 0:
        raise ValueError("scale factor must be positive")
    buyers = [replace(b, reservation_utility=b.reservation_utility * k) for b in m.buyers]
    return build_market(m.base.with_costs(m.base.cost * k), buyers, m.sellers, m.mode)
