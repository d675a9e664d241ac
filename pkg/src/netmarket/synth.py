"""Seeded synthetic road grids and agent populations.

``grid_network(rows, cols)`` lays nodes on a regular lon/lat lattice
(``spacing_km`` apart, south-west corner at ``origin``) and joins 4-neighbours
with one arc in each direction. Arc costs are either integers drawn
uniformly from ``[1, max_cost]`` per road segment (both directions share the
draw) or, with ``integer_costs=False``, haversine length times
``per_km_cost`` with every node jittered by up to ``jitter`` of the spacing.

``random_agents`` picks ``sellers`` distinct nodes, gives each seller one
unit plus a multinomial share of the rest of ``demand_units``, and drops the
same number of demand units on uniformly random nodes, aggregated per node.
Both use ``numpy.random.default_rng(seed)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geo import KM_PER_DEG_LAT, haversine_km
from .graph import Graph

__all__ = ["SynthAgents", "grid_network", "random_agents"]


def grid_network(
    rows: int,
    cols: int,
    *,
    seed: int = 0,
    spacing_km: float = 1.0,
    origin: tuple[float, float] = (2.0, 46.0),
    integer_costs: bool = True,
    max_cost: int = 10,
    per_km_cost: float = 1.0,
    jitter: float = 0.25,
) -> Graph:
    if rows < 1 or cols < 1:
        raise ValueError("grid needs at least one row and one column")
    rng = np.random.default_rng(seed)
    lon0, lat0 = origin
    dlat = spacing_km / KM_PER_DEG_LAT
    dlon = dlat / math.cos(math.radians(lat0 + dlat * rows / 2))
    r, c = np.divmod(np.arange(rows * cols), cols)
    lat = lat0 + r * dlat
    lon = lon0 + c * dlon
    if not integer_costs and jitter:
        lat = lat + rng.uniform(-jitter, jitter, lat.size) * dlat
        lon = lon + rng.uniform(-jitter, jitter, lon.size) * dlon

    ids = np.arange(rows * cols).reshape(rows, cols)
    u = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
    v = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
    if integer_costs:
        seg = rng.integers(1, max_cost + 1, u.size).astype(np.float64)
    else:
        seg = haversine_km(lon[u], lat[u], lon[v], lat[v]) * per_km_cost
    tail = np.stack([u, v], axis=1).ravel()
    head = np.stack([v, u], axis=1).ravel()
    cost = np.repeat(seg, 2)
    return Graph.from_arrays(lon, lat, tail, head, cost)


@dataclass(frozen=True)
class SynthAgents:
    seller_nodes: np.ndarray
    supply: np.ndarray
    buyer_nodes: np.ndarray
    demand: np.ndarray


def random_agents(node_count: int, sellers: int, demand_units: int, *, seed: int = 0) -> SynthAgents:
    if sellers < 1 or sellers > node_count:
        raise ValueError("need between 1 and node_count sellers")
    if demand_units < sellers:
        raise ValueError("every seller needs at least one unit of supply")
    rng = np.random.default_rng(seed + 1)
    seller_nodes = np.sort(rng.choice(node_count, size=sellers, replace=False))
    supply = 1 + rng.multinomial(demand_units - sellers, np.full(sellers, 1.0 / sellers))
    units = rng.integers(0, node_count, demand_units)
    counts = np.bincount(units, minlength=node_count)
    buyer_nodes = np.flatnonzero(counts)
    return SynthAgents(seller_nodes, supply.astype(np.float64), buyer_nodes,
                       counts[buyer_nodes].astype(np.float64))
