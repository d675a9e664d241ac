"""Uncapacitated min-cost flow (transshipment) with dual prices.

Flow runs from nodes with positive excess (sellers) toward nodes with
negative excess (buyers). At optimum the node potentials ``p`` satisfy
``p[head] - p[tail] <= cost`` on every arc, with equality wherever the arc
carries flow.
"""

from __future__ import annotations

import itertools
import math
from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_array
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .errors import DimensionMismatch, Disconnected, TooLarge, Unbalanced
from .graph import Graph, weak_components
from .paths import geodesic_matrix

__all__ = [
    "DegeneracyProbe",
    "FlowProblem",
    "FlowSolution",
    "SlacknessReport",
    "alternative_optimum",
    "oracle_min_cost",
    "probe_degeneracy",
    "solve_mcf",
    "verify_slackness",
]

BALANCE_TOL = 1e-9


@dataclass(frozen=True)
class FlowProblem:
    graph: Graph
    excess: np.ndarray

    def __post_init__(self):
        excess = np.asarray(self.excess, dtype=np.float64)
        if excess.shape != (self.graph.node_count,):
            raise DimensionMismatch(
                f"excess has shape {excess.shape}, graph has {self.graph.node_count} nodes")
        if not np.all(np.isfinite(excess)):
            raise ValueError("excess must be finite")
        object.__setattr__(self, "excess", excess)

    @property
    def scale(self) -> float:
        return float(np.abs(self.excess).sum()) / 2

    def imbalance(self) -> float:
        return math.fsum(self.excess.tolist())

    def is_balanced(self) -> bool:
        return abs(self.imbalance()) <= BALANCE_TOL * max(1.0, self.scale)


@dataclass(frozen=True)
class FlowSolution:
    flow: np.ndarray
    potential: np.ndarray
    total_cost: float

    def support(self) -> frozenset[int]:
        return frozenset(np.flatnonzero(self.flow > 0).tolist())


@dataclass(frozen=True)
class SlacknessReport:
    max_dual_violation: float
    max_support_gap: float
    max_conservation_residual: float
    tol: float

    @property
    def optimal(self) -> bool:
        return (self.max_dual_violation <= self.tol
                and self.max_support_gap <= self.tol
                and self.max_conservation_residual <= self.tol)


def _mirror(g: Graph, excess: np.ndarray) -> tuple[Graph, np.ndarray]:
    n = g.node_count
    mirrored = Graph(g.lon[::-1], g.lat[::-1], (n - 1 - g.tail)[::-1],
                     (n - 1 - g.head)[::-1], g.cost[::-1])
    return mirrored, excess[::-1].copy()


def _raw_solve(g: Graph, excess: np.ndarray, scale: float) -> tuple[np.ndarray, np.ndarray]:
    n = g.node_count
    work = excess.copy()
    max_cost = float(g.cost.max()) if g.arc_count else 0.0
    eps_flow = 1e-12 * max(1.0, scale)
    eps_done = BALANCE_TOL * max(1.0, scale)
    flow, pi, status, node = _kernels.ssp(
        n, g.tail, g.head, g.cost, g.out_ptr, g.out_arc, g.in_ptr, g.in_arc,
        work, eps_flow, 1e-12 * max_cost, eps_done)
    if status == _kernels.DISCONNECTED:
        raise Disconnected(int(node))
    return flow, pi


def _tighten(g: Graph, excess: np.ndarray, flow: np.ndarray, pi: np.ndarray) -> np.ndarray:
    """Replace raw potentials by delivered prices ``min_w pi[w] + d(w, v)``.

    Sources keep their potential and every node on a flow path keeps its
    potential, so complementary slackness is unaffected. Nodes no source can
    reach are lifted by one constant so the arcs leaving them stay feasible.
    """
    sources = np.flatnonzero(excess > 0).astype(np.int64)
    if sources.size == 0:
        return pi
    p = _kernels.seeded_dijkstra(g.node_count, g.head, g.cost, g.out_ptr, g.out_arc,
                                 sources, pi[sources].copy())
    active = flow > 0
    if np.any(np.abs(p[g.head[active]] - p[g.tail[active]] - g.cost[active])
              > 1e-9 * max(1.0, float(np.abs(pi).max()))):
        return pi
    lost = ~np.isfinite(p)
    if lost.any():
        p[lost] = pi[lost]
        cross = lost[g.tail] & ~lost[g.head]
        lift = 0.0
        if cross.any():
            lift = max(0.0, float(np.max(p[g.head[cross]] - g.cost[cross] - pi[g.tail[cross]])))
        p[lost] += lift
    return p


def normalize_potential(g: Graph, potential: np.ndarray, reference: int | None = None) -> np.ndarray:
    """Shift each weakly connected component so its anchor has potential 0.

    The anchor is ``reference`` inside its own component and the smallest
    node id everywhere else.
    """
    potential = np.asarray(potential, dtype=np.float64).copy()
    if potential.size == 0:
        return potential
    count, labels = weak_components(g)
    anchor = np.full(count, g.node_count, dtype=np.int64)
    np.minimum.at(anchor, labels, np.arange(g.node_count))
    if reference is not None:
        anchor[labels[reference]] = reference
    potential -= potential[anchor][labels]
    potential[potential == 0] = 0.0  # no negative zeros in output
    return potential


def solve_mcf(
    problem: FlowProblem,
    *,
    reference: int | None = None,
    mirrored: bool = False,
) -> FlowSolution:
    """Solve ``min sum(cost * flow)`` subject to ``out - in = excess`` and ``flow >= 0``.

    Ties inside the solver favour smaller node and arc ids; ``mirrored``
    relabels both in reverse so ties break the other way. Potentials are
    delivered prices normalised by :func:`normalize_potential`.

    Raises :class:`Unbalanced` if excesses do not sum to zero and
    :class:`Disconnected` if a source cannot reach the remaining demand.
    """
    g = problem.graph
    if not problem.is_balanced():
        raise Unbalanced(problem.imbalance())
    n = g.node_count
    if n == 0:
        return FlowSolution(np.zeros(g.arc_count), np.zeros(0), 0.0)
    if mirrored:
        mg, mex = _mirror(g, problem.excess)
        flow, pi = _raw_solve(mg, mex, problem.scale)
        flow, pi = flow[::-1].copy(), pi[::-1].copy()
    else:
        flow, pi = _raw_solve(g, problem.excess, problem.scale)
    p = _tighten(g, problem.excess, flow, pi)
    p = normalize_potential(g, p, reference)
    return FlowSolution(flow, p, float(np.dot(g.cost, flow)))


def verify_slackness(problem: FlowProblem, solution: FlowSolution, tol: float = 1e-9) -> SlacknessReport:
    """Measure how far ``solution`` is from the optimality conditions."""
    g = problem.graph
    if solution.flow.shape != (g.arc_count,) or solution.potential.shape != (g.node_count,):
        raise DimensionMismatch("solution does not match the problem's graph")
    p, flow = solution.potential, solution.flow
    slack = p[g.head] - p[g.tail] - g.cost
    dual = max(0.0, float(slack.max())) if slack.size else 0.0
    active = flow > 0
    gap = float(np.abs(slack[active]).max()) if active.any() else 0.0
    net = (np.bincount(g.tail, weights=flow, minlength=g.node_count)
           - np.bincount(g.head, weights=flow, minlength=g.node_count))
    residual = float(np.abs(net - problem.excess).max()) if g.node_count else 0.0
    if flow.size and flow.min() < 0:
        residual = max(residual, float(-flow.min()))
    return SlacknessReport(dual, gap, residual, tol)


def _units(excess: np.ndarray, sign: int) -> list[int]:
    units = []
    for v in np.flatnonzero(sign * excess > 0):
        amount = sign * excess[v]
        if amount != round(amount):
            raise ValueError("oracle_min_cost needs integral excesses")
        units.extend([int(v)] * int(round(amount)))
    return units


def oracle_min_cost(
    problem: FlowProblem,
    buyers: Sequence[int] | None = None,
    sellers: Sequence[int] | None = None,
    max_units: int = 8,
) -> float:
    """Exact optimum by trying every matching of demand units to supply units.

    ``sellers``/``buyers`` list one node per unit; by default they are read
    off the integral excess vector. Unit-to-unit costs are geodesics.
    """
    sellers = list(sellers) if sellers is not None else _units(problem.excess, +1)
    buyers = list(buyers) if buyers is not None else _units(problem.excess, -1)
    if len(sellers) != len(buyers):
        raise Unbalanced(float(len(sellers) - len(buyers)))
    if len(sellers) > max_units:
        raise TooLarge(f"{len(sellers)} units exceeds the enumeration guard of {max_units}")
    if not sellers:
        return 0.0
    src = sorted(set(sellers))
    dst = sorted(set(buyers))
    dist = geodesic_matrix(problem.graph, src, dst)
    row = {v: i for i, v in enumerate(src)}
    col = {v: j for j, v in enumerate(dst)}
    costs = [[dist[row[s], col[b]] for b in buyers] for s in sellers]
    best = math.inf
    for perm in set(itertools.permutations(range(len(buyers)))):
        total = sum(costs[i][j] for i, j in enumerate(perm))
        if total < best:
            best = total
    return float(best)


def _tight_residual(g: Graph, solution: FlowSolution, tol: float):
    p, flow = solution.potential, solution.flow
    rc = g.cost + p[g.tail] - p[g.head]
    tight = np.abs(rc) <= tol
    active = flow > 0
    return tight, active


def alternative_optimum(problem: FlowProblem, solution: FlowSolution,
                        tol: float = 1e-9) -> FlowSolution | None:
    """Another optimal flow, or ``None`` when ``solution.flow`` is the unique optimum.

    Any optimal flow is supported on arcs that are tight for any optimal
    potential, so the optimum is unique exactly when the tight residual graph
    has no cycle other than an arc paired with its own reverse. When such a
    cycle exists, flow is pushed around it.
    """
    g = problem.graph
    n, m = g.node_count, g.arc_count
    tight, active = _tight_residual(g, solution, tol)
    fwd = np.flatnonzero(tight)
    rev = np.flatnonzero(active)
    src = np.concatenate([g.tail[fwd], g.head[rev]])
    dst = np.concatenate([g.head[fwd], g.tail[rev]])
    if src.size == 0:
        return None
    residual = coo_array((np.ones(src.size), (src, dst)), shape=(n, n))
    _, comp = connected_components(residual, directed=True, connection="strong")

    out: list[list[tuple[int, int, int]]] = [[] for _ in range(n)]
    for a in fwd.tolist():
        out[int(g.tail[a])].append((int(g.head[a]), a, +1))
    for a in rev.tolist():
        out[int(g.head[a])].append((int(g.tail[a]), a, -1))

    cycle: list[tuple[int, int]] | None = None
    for a in fwd.tolist():
        if active[a]:
            continue
        u, v = int(g.tail[a]), int(g.head[a])
        if comp[u] != comp[v]:
            continue
        prev: dict[int, tuple[int, int, int]] = {v: (-1, -1, 0)}
        queue = deque([v])
        while queue and u not in prev:
            x = queue.popleft()
            for y, b, d in out[x]:
                if y not in prev:
                    prev[y] = (x, b, d)
                    queue.append(y)
        steps = []
        x = u
        while x != v:
            px, b, d = prev[x]
            steps.append((b, d))
            x = px
        cycle = [(a, +1)] + steps[::-1]
        break

    if cycle is None:
        sizes = np.bincount(comp)
        counts = np.bincount(comp[g.tail[rev]], minlength=sizes.size)
        loopy = np.flatnonzero(counts >= sizes)
        if loopy.size:
            members = rev[comp[g.tail[rev]] == loopy[0]]
            parent = list(range(n))

            def find(x: int) -> int:
                while parent[x] != x:
                    parent[x] = parent[parent[x]]
                    x = parent[x]
                return x

            forest: dict[int, list[tuple[int, int]]] = {}
            for a in members.tolist():
                u, v = int(g.tail[a]), int(g.head[a])
                ru, rv = find(u), find(v)
                if ru != rv:
                    parent[ru] = rv
                    forest.setdefault(u, []).append((v, a))
                    forest.setdefault(v, []).append((u, a))
                    continue
                # Tree path v -> u closes the cycle u -a-> v -...-> u; walk it backwards on a.
                prev = {v: (-1, -1)}
                queue = deque([v])
                while u not in prev:
                    x = queue.popleft()
                    for y, b in forest.get(x, []):
                        if y not in prev:
                            prev[y] = (x, b)
                            queue.append(y)
                steps = []
                x = u
                while x != v:
                    px, b = prev[x]
                    steps.append((b, +1 if int(g.tail[b]) == px else -1))
                    x = px
                cycle = [(a, -1)] + [(b, -d) for b, d in steps]
                break

    if cycle is None:
        return None
    decreases = [solution.flow[b] for b, d in cycle if d < 0]
    delta = min(decreases) if decreases else 1.0
    flow = solution.flow.copy()
    for b, d in cycle:
        flow[b] += d * delta
    flow[np.abs(flow) <= 1e-12 * max(1.0, problem.scale)] = 0.0
    return FlowSolution(flow, solution.potential, float(np.dot(g.cost, flow)))


@dataclass(frozen=True)
class DegeneracyProbe:
    degenerate: bool
    primary: FlowSolution
    alternative: FlowSolution | None

    @property
    def supports(self) -> list[frozenset[int]]:
        sols = [self.primary] + ([self.alternative] if self.alternative is not None else [])
        return [s.support() for s in sols]


def probe_degeneracy(problem: FlowProblem, *, reference: int | None = None,
                     tol: float = 1e-9) -> DegeneracyProbe:
    """Look for two distinct optimal flows.

    First re-solves with mirrored tie-breaking; if that lands on
    the same flow, falls back to :func:`alternative_optimum`.
    """
    primary = solve_mcf(problem, reference=reference)
    mirrored = solve_mcf(problem, reference=reference, mirrored=True)
    if np.max(np.abs(primary.flow - mirrored.flow), initial=0.0) > tol * max(1.0, problem.scale):
        return DegeneracyProbe(True, primary, mirrored)
    alt = alternative_optimum(problem, primary, tol)
    return DegeneracyProbe(alt is not None, primary, alt)
