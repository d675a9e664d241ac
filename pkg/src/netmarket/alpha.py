"""Buyer-seller transport under powered geodesic costs.

Raising every buyer-seller geodesic to a power ``alpha >= 1`` before solving
the assignment makes long trips disproportionately expensive. That breaks
most of the ties which leave the plain network problem with several optimal
flows. Costs are computed on the whole geodesic, not per arc.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_array, csr_array

from .equilibrium import Buyer, Seller
from .errors import Disconnected, Infeasible, NegativeAlpha, Unbalanced
from .graph import Graph
from .mcf import BALANCE_TOL, FlowProblem, FlowSolution, probe_degeneracy, solve_mcf
from .paths import geodesic_matrix, min_cost_adjacency

__all__ = [
    "DENSE_CAP",
    "PowerDiagram",
    "TransportPlan",
    "TransportProblem",
    "build_transport",
    "extract_power_diagram",
    "probe_transport",
    "solve_transport",
]

DENSE_CAP = 5000
NEAREST_K = 32


@dataclass(frozen=True)
class TransportProblem:
    """Rows are buyers, columns sellers. Unreachable pairs cost ``inf``.

    ``cost`` is a dense array, or a sparse one whose missing entries are
    unreachable (used above :data:`DENSE_CAP`).
    """

    cost: np.ndarray | csr_array
    supply: np.ndarray
    demand: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        supply = np.asarray(self.supply, dtype=np.float64)
        demand = np.asarray(self.demand, dtype=np.float64)
        object.__setattr__(self, "supply", supply)
        object.__setattr__(self, "demand", demand)
        if self.cost.shape != (demand.size, supply.size):
            raise ValueError(f"cost shape {self.cost.shape} does not match "
                             f"{demand.size} buyers x {supply.size} sellers")
        if np.any(supply < 0) or np.any(demand < 0):
            raise ValueError("supply and demand must be nonnegative")
        if self.alpha < 1:
            raise NegativeAlpha(f"alpha must be >= 1, got {self.alpha!r}")
        net = math.fsum(supply.tolist()) - math.fsum(demand.tolist())
        scale = max(1.0, float(supply.sum()))
        if abs(net) > BALANCE_TOL * scale:
            raise Unbalanced(net)

    @property
    def is_sparse(self) -> bool:
        return not isinstance(self.cost, np.ndarray)

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(buyer, seller, cost)`` for every finite pair, row-major."""
        if self.is_sparse:
            c = coo_array(self.cost)
            order = np.lexsort((c.col, c.row))
            i, j, v = c.row[order], c.col[order], c.data[order]
        else:
            i, j = np.nonzero(np.isfinite(self.cost))
            v = self.cost[i, j]
        keep = np.isfinite(v)
        return i[keep].astype(np.int64), j[keep].astype(np.int64), v[keep].astype(np.float64)


@dataclass(frozen=True)
class TransportPlan:
    """Optimal weights plus duals: ``buyer_dual[i] - seller_dual[j] <= cost[i, j]``,
    with equality wherever ``weights[i, j] > 0``."""

    weights: csr_array
    total_cost: float
    seller_dual: np.ndarray
    buyer_dual: np.ndarray

    def support(self) -> frozenset[tuple[int, int]]:
        c = coo_array(self.weights)
        return frozenset((int(i), int(j)) for i, j, w in zip(c.row, c.col, c.data) if w > 0)


@dataclass(frozen=True)
class PowerDiagram:
    """``assignment[i]`` is a seller index, a tuple of seller indices when the
    buyer is split, or ``None`` for a buyer with no mass."""

    assignment: tuple
    split_count: int


def build_transport(g: Graph, buyers: Sequence[Buyer], sellers: Sequence[Seller],
                    alpha: float = 1.0, *, dense_cap: int = DENSE_CAP,
                    k: int = NEAREST_K) -> TransportProblem:
    """Powered seller-to-buyer geodesics.

    Up to ``dense_cap`` buyers and sellers the full table is kept. Past that
    each buyer keeps only its ``k`` nearest sellers, which is exact only if
    some optimum never ships farther than that.
    """
    if alpha < 1:
        raise NegativeAlpha(f"alpha must be >= 1, got {alpha!r}")
    supply = np.array([s.observed_supply if s.observed_supply is not None else 0.0
                       for s in sellers], dtype=np.float64)
    demand = np.array([b.mass for b in buyers], dtype=np.float64)
    net = math.fsum(supply.tolist()) - math.fsum(demand.tolist())
    if abs(net) > BALANCE_TOL * max(1.0, float(supply.sum())):
        raise Unbalanced(net)
    src = [s.node for s in sellers]
    dst = [b.node for b in buyers]
    if len(src) <= dense_cap and len(dst) <= dense_cap:
        cost = geodesic_matrix(g, src, dst).T ** alpha
        return TransportProblem(np.ascontiguousarray(cost), supply, demand, alpha)
    return TransportProblem(_nearest(g, src, dst, k, alpha), supply, demand, alpha)


def _nearest(g: Graph, src, dst, k: int, alpha: float) -> csr_array:
    nb, ns = len(dst), len(src)
    k = min(k, ns)
    best = np.full((nb, k), np.inf)
    who = np.full((nb, k), -1, dtype=np.int64)
    adj = min_cost_adjacency(g)
    step = max(1, 20_000_000 // max(1, nb))
    for lo in range(0, ns, step):
        block = geodesic_matrix(g, src[lo:lo + step], dst, adjacency=adj).T
        vals = np.concatenate([best, block], axis=1)
        ids = np.concatenate([who, np.broadcast_to(np.arange(lo, lo + block.shape[1]), block.shape)], axis=1)
        order = _row_topk(vals, ids, k)
        best = np.take_along_axis(vals, order, axis=1)
        who = np.take_along_axis(ids, order, axis=1)
    rows = np.repeat(np.arange(nb), k)
    keep = np.isfinite(best.ravel())
    return csr_array((best.ravel()[keep] ** alpha, (rows[keep], who.ravel()[keep])), shape=(nb, ns))


def _row_topk(vals: np.ndarray, ids: np.ndarray, k: int) -> np.ndarray:
    # Smallest k per row; equal distances keep the smaller seller index.
    order = np.argsort(ids, axis=1, kind="stable")
    by_val = np.argsort(np.take_along_axis(vals, order, axis=1), axis=1, kind="stable")
    return np.take_along_axis(order, by_val, axis=1)[:, :k]


def _bipartite(tp: TransportProblem) -> tuple[FlowProblem, np.ndarray, np.ndarray]:
    ns, nb = tp.supply.size, tp.demand.size
    i, j, c = tp.entries()
    tail = j
    head = ns + i
    n = ns + nb
    g = Graph(np.zeros(n), np.zeros(n), tail, head, c)
    excess = np.concatenate([tp.supply, -tp.demand])
    return FlowProblem(g, excess), i, j


def _plan(tp: TransportProblem, sol: FlowSolution, i: np.ndarray, j: np.ndarray) -> TransportPlan:
    ns, nb = tp.supply.size, tp.demand.size
    w = csr_array((sol.flow, (i, j)), shape=(nb, ns))
    w.eliminate_zeros()
    return TransportPlan(w, sol.total_cost, sol.potential[:ns].copy(), sol.potential[ns:].copy())


def solve_transport(tp: TransportProblem) -> TransportPlan:
    """Minimum-cost plan, solved as a bipartite transshipment."""
    problem, i, j = _bipartite(tp)
    try:
        sol = solve_mcf(problem)
    except Disconnected as exc:
        raise Infeasible("some demand can only be met over unreachable pairs") from exc
    return _plan(tp, sol, i, j)


def probe_transport(tp: TransportProblem, tol: float = 1e-9) -> tuple[bool, list[TransportPlan]]:
    """Whether the transport optimum is degenerate, with the plans that show it.

    Re-solves with mirrored tie-breaking and, if that finds the same plan,
    searches for another optimum directly.
    """
    problem, i, j = _bipartite(tp)
    try:
        probe = probe_degeneracy(problem, tol=tol)
    except Disconnected as exc:
        raise Infeasible("some demand can only be met over unreachable pairs") from exc
    plans = [_plan(tp, probe.primary, i, j)]
    if probe.degenerate:
        plans.append(_plan(tp, probe.alternative, i, j))
    return probe.degenerate, plans


def extract_power_diagram(plan: TransportPlan, demand: np.ndarray | None = None,
                          tie_tol: float = 1e-6) -> PowerDiagram:
    """Label each buyer with the seller holding at least ``1 - tie_tol`` of its mass.

    Buyers without such a seller are split across every seller in their support.
    """
    w = csr_array(plan.weights)
    nb = w.shape[0]
    mass = np.asarray(w.sum(axis=1)).ravel() if demand is None else np.asarray(demand, float)
    assignment = []
    splits = 0
    for r in range(nb):
        lo, hi = w.indptr[r], w.indptr[r + 1]
        cols, vals = w.indices[lo:hi], w.data[lo:hi]
        pos = vals > 0
        cols, vals = cols[pos], vals[pos]
        if mass[r] <= 0 or cols.size == 0:
            assignment.append(None)
            continue
        top = int(np.argmax(vals))
        if vals[top] >= (1 - tie_tol) * mass[r]:
            assignment.append(int(cols[top]))
        else:
            assignment.append(tuple(sorted(int(c) for c in cols)))
            splits += 1
    return PowerDiagram(tuple(assignment), splits)
