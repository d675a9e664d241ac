"""End-to-end pipelines: demand captured by priced sellers, and quality
rankings recovered from observed volumes."""

from __future__ import annotations

import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .equilibrium import Buyer, Market, Seller, build_market, buyer_choices, forward_prices, inverse_prices
from .errors import EmptyArea, EmptyRegionSide, ModeMismatch, Unbalanced
from .mcf import BALANCE_TOL

__all__ = [
    "DemandReport",
    "QualityRanking",
    "RegionBalance",
    "aggregate_demand",
    "balance_regions",
    "dense_rank",
    "rank_quality",
    "spread_population",
]

RANK_TOL = 1e-9


@dataclass(frozen=True)
class DemandReport:
    """``choice[i]`` is the seller index buyer ``i`` buys from, ``-1`` for the outside option."""

    seller_labels: tuple[str, ...]
    seller_demand: np.ndarray
    choice: np.ndarray
    price: np.ndarray
    outside_mass: float

    def demand_of(self, label: str) -> float:
        return float(self.seller_demand[self.seller_labels.index(label)])

    def chosen_label(self, i: int) -> str | None:
        c = int(self.choice[i])
        return None if c < 0 else self.seller_labels[c]


@dataclass(frozen=True)
class QualityRanking:
    """Per seller, in market order. Ranks only compare sellers of the same region."""

    labels: tuple[str, ...]
    regions: tuple[str | None, ...]
    quality: np.ndarray
    rank: np.ndarray

    def rows(self) -> list[tuple[str, str | None, float, int]]:
        """``(label, region, quality, rank)`` ordered by region, rank, then label."""
        out = list(zip(self.labels, self.regions, self.quality.tolist(), self.rank.tolist()))
        return sorted(out, key=lambda r: ("" if r[1] is None else str(r[1]), r[3], r[0]))


@dataclass(frozen=True)
class RegionBalance:
    scale: dict
    supply: dict
    demand_before: dict
    demand_after: dict


def aggregate_demand(m: Market) -> DemandReport:
    """Solve every buyer's discrete choice and add up the mass each seller gets."""
    if m.mode != "forward":
        raise ModeMismatch("aggregate_demand needs a forward-mode market")
    prices, _ = forward_prices(m)
    choice, paid = buyer_choices(m, prices)
    ns = len(m.sellers)
    mass = np.array([b.mass for b in m.buyers], dtype=np.float64)
    inside = choice < ns
    demand = np.bincount(choice[inside], weights=mass[inside], minlength=ns).astype(np.float64)
    outside = math.fsum(mass[~inside].tolist())
    choice = np.where(inside, choice, -1)
    return DemandReport(tuple(s.label for s in m.sellers), demand, choice, paid, outside)


def spread_population(area_counts: Iterable[tuple[object, float]], node_areas: Sequence,
                      *, reservation_utility: float = math.inf,
                      region: str | None = None) -> list[Buyer]:
    """Divide each area's head count equally over the nodes inside it.

    ``node_areas[v]`` is the area containing node ``v`` (``None`` if none).
    """
    members = defaultdict(list)
    for v, area in enumerate(node_areas):
        if area is not None:
            members[area].append(v)
    buyers = []
    for area, count in area_counts:
        if count < 0:
            raise ValueError(f"area {area!r} has negative count {count!r}")
        if count == 0:
            continue
        nodes = members.get(area)
        if not nodes:
            raise EmptyArea(area)
        share = count / len(nodes)
        buyers.extend(Buyer(v, share, reservation_utility, region) for v in nodes)
    return buyers


def _exact_rescale(masses: list[float], target: float) -> list[float]:
    """Scale so the correctly rounded sum is exactly ``target``, nudging the largest entry."""
    total = math.fsum(masses)
    out = [x * (target / total) for x in masses]
    big = max(range(len(out)), key=out.__getitem__)
    for _ in range(4):
        gap = target - math.fsum(out)
        if gap == 0:
            return out
        out[big] += gap
    # The nudge itself rounds; finish one ulp at a time (fsum is monotone in each entry).
    # A round-half-even tie can make the largest entry jump over the target, so
    # smaller entries, with finer ulps, get a turn.
    for j in sorted(range(len(out)), key=out.__getitem__, reverse=True):
        last = 0
        for _ in range(64):
            s = math.fsum(out)
            if s == target:
                return out
            step = 1 if s < target else -1
            if last and step != last:
                break
            last = step
            out[j] = math.nextafter(out[j], math.inf * step)
    return out


def balance_regions(buyers: Sequence[Buyer], sellers: Sequence[Seller],
                    regions: Iterable | None = None) -> tuple[list[Buyer], RegionBalance]:
    """Scale buyer masses so each region's demand equals its observed supply.

    Regions come from the agents' ``region`` fields; ``regions`` restricts
    the work to those labels. Buyers elsewhere are returned unchanged.
    """
    supply = defaultdict(list)
    for s in sellers:
        supply[s.region].append(s.observed_supply or 0.0)
    demand = defaultdict(list)
    for i, b in enumerate(buyers):
        demand[b.region].append(i)
    wanted = list(dict.fromkeys(regions)) if regions is not None else \
        list(dict.fromkeys([*(s.region for s in sellers), *(b.region for b in buyers)]))

    out = list(buyers)
    scale, sup, before, after = {}, {}, {}, {}
    for r in wanted:
        total_supply = math.fsum(supply.get(r, []))
        idx = demand.get(r, [])
        masses = [buyers[i].mass for i in idx]
        if total_supply <= 0:
            raise EmptyRegionSide(r, "supply")
        if not masses:
            raise EmptyRegionSide(r, "demand")
        total_demand = math.fsum(masses)
        new = _exact_rescale(masses, total_supply)
        for i, mass in zip(idx, new):
            out[i] = replace(buyers[i], mass=mass)
        scale[r] = total_supply / total_demand
        sup[r] = total_supply
        before[r] = total_demand
        after[r] = math.fsum(new)
    return out, RegionBalance(scale, sup, before, after)


def dense_rank(values: np.ndarray, tol: float = RANK_TOL) -> np.ndarray:
    """Dense ranks, 1 for the largest; values within ``tol`` (relative) of the
    previous distinct value share its rank."""
    values = np.asarray(values, dtype=np.float64)
    rank = np.zeros(values.size, dtype=np.int64)
    if values.size == 0:
        return rank
    order = np.argsort(-values, kind="stable")
    width = tol * max(1.0, float(np.abs(values).max()))
    current, level = 1, values[order[0]]
    for i in order:
        if level - values[i] > width:
            current += 1
            level = values[i]
        rank[i] = current
    return rank


def _region_quality(m: Market, region) -> tuple[list[int], np.ndarray]:
    idx = [j for j, s in enumerate(m.sellers) if s.region == region]
    buyers = [b for b in m.buyers if b.region == region]
    sellers = [m.sellers[j] for j in idx]
    supply = math.fsum(s.observed_supply for s in sellers)
    demand = math.fsum(b.mass for b in buyers)
    if abs(supply - demand) > BALANCE_TOL * max(1.0, supply, demand):
        raise Unbalanced(supply - demand, region)
    sub = build_market(m.base, buyers, sellers, "inverse")
    prices, _ = inverse_prices(sub)
    return idx, -prices.seller_price


def rank_quality(m: Market, regions: Iterable | None = None, *, threads: int = 1) -> QualityRanking:
    """Quality index ``-price`` for every seller, ranked within its region.

    Each region is solved as its own market on the shared road graph, so
    travel may cross region borders while supply and demand balance
    regionally. Call :func:`balance_regions` first if they do not.
    """
    if m.mode != "inverse":
        raise ModeMismatch("rank_quality needs an inverse-mode market")
    if regions is None:
        regions = list(dict.fromkeys(s.region for s in m.sellers))
    regions = list(regions)
    quality = np.full(len(m.sellers), np.nan)
    rank = np.zeros(len(m.sellers), dtype=np.int64)
    if threads > 1 and len(regions) > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda r: _region_quality(m, r), regions))
    else:
        results = [_region_quality(m, r) for r in regions]
    for idx, q in results:
        quality[idx] = q
        rank[idx] = dense_rank(q)
    quality[quality == 0] = 0.0
    return QualityRanking(tuple(s.label for s in m.sellers), tuple(s.region for s in m.sellers),
                          quality, rank)
