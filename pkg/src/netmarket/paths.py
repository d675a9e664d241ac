"""Multi-source Dijkstra with per-seed initial labels, and geodesic tables."""

from __future__ import annotations

import heapq
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from typing import Literal, NamedTuple

import numpy as np
from scipy.sparse import csr_array
from scipy.sparse.csgraph import dijkstra as _csgraph_dijkstra

from .errors import NegativeCost, UnknownNode
from .graph import Graph

__all__ = ["LabelTree", "Seed", "dijkstra", "geodesic_matrix", "min_cost_adjacency"]

INF = math.inf
_CHUNK_CELLS = 20_000_000


class Seed(NamedTuple):
    node: int
    label: float = 0.0
    source_id: int = 0


@dataclass(frozen=True)
class LabelTree:
    """Result of a :func:`dijkstra` run.

    ``dist[v]`` is ``inf`` for unreachable nodes, ``parent[v]`` the arc index
    that last improved ``v`` (-1 at seeds and unreachable nodes) and
    ``origin[v]`` the winning seed's ``source_id`` (-1 if unreachable).
    """

    dist: np.ndarray
    parent: np.ndarray
    origin: np.ndarray
    direction: str = "forward"

    def path_arcs(self, g: Graph, v: int) -> list[int]:
        """Arcs from the originating seed to ``v``, in travel order."""
        if not math.isfinite(self.dist[v]):
            return []
        arcs = []
        end = g.head if self.direction == "forward" else g.tail
        start = g.tail if self.direction == "forward" else g.head
        while self.parent[v] >= 0:
            a = int(self.parent[v])
            assert end[a] == v
            arcs.append(a)
            v = int(start[a])
        return arcs[::-1] if self.direction == "forward" else arcs


def dijkstra(
    g: Graph,
    seeds: Iterable[Seed | tuple],
    direction: Literal["forward", "reverse"] = "forward",
) -> LabelTree:
    """Label-setting shortest paths from several labelled seeds.

    ``dist[v] = min_s (label_s + d(s, v))`` where ``d`` follows arcs forward,
    or backward when ``direction="reverse"``. Ties go to the smaller
    ``source_id``, then to the smaller parent arc index.
    """
    seeds = [Seed(*s) for s in seeds]
    if not seeds:
        raise ValueError("at least one seed is required")
    if direction not in ("forward", "reverse"):
        raise ValueError(f"unknown direction {direction!r}")
    if g.arc_count and g.cost.min() < 0:
        a = int(np.argmin(g.cost))
        raise NegativeCost(a, float(g.cost[a]))
    n = g.node_count
    if direction == "forward":
        ptr, adj, other = g.out_ptr.tolist(), g.out_arc.tolist(), g.head.tolist()
    else:
        ptr, adj, other = g.in_ptr.tolist(), g.in_arc.tolist(), g.tail.tolist()
    cost = g.cost.tolist()

    dist = [INF] * n
    origin = [-1] * n
    parent = [-1] * n
    done = [False] * n
    heap: list[tuple[float, int, int]] = []
    for s in seeds:
        if not 0 <= s.node < n:
            raise UnknownNode(s.node)
        if not math.isfinite(s.label):
            raise ValueError(f"seed label must be finite, got {s.label!r}")
        if s.label < dist[s.node] or (s.label == dist[s.node] and s.source_id < origin[s.node]):
            dist[s.node] = float(s.label)
            origin[s.node] = s.source_id
            heapq.heappush(heap, (dist[s.node], s.source_id, s.node))

    while heap:
        d, sid, u = heapq.heappop(heap)
        if done[u] or d != dist[u] or sid != origin[u]:
            continue
        done[u] = True
        for k in range(ptr[u], ptr[u + 1]):
            a = adj[k]
            v = other[a]
            if done[v]:
                continue
            nd = d + cost[a]
            dv = dist[v]
            if nd < dv or (nd == dv and (sid < origin[v] or (sid == origin[v] and a < parent[v]))):
                improved = nd < dv or sid != origin[v]
                dist[v] = nd
                origin[v] = sid
                parent[v] = a
                if improved:
                    heapq.heappush(heap, (nd, sid, v))

    return LabelTree(
        np.array(dist, dtype=np.float64),
        np.array(parent, dtype=np.int64),
        np.array(origin, dtype=np.int64),
        direction,
    )


def min_cost_adjacency(g: Graph) -> csr_array:
    """Sparse ``n x n`` matrix holding the cheapest arc between each ordered pair.

    Zero-cost arcs are stored as explicit zeros, which csgraph treats as edges.
    """
    n = g.node_count
    if g.arc_count == 0:
        return csr_array((n, n), dtype=np.float64)
    order = np.lexsort((g.cost, g.head, g.tail))
    t, h, c = g.tail[order], g.head[order], g.cost[order]
    first = np.ones(t.size, dtype=bool)
    first[1:] = (t[1:] != t[:-1]) | (h[1:] != h[:-1])
    t, h, c = t[first], h[first], c[first]
    # Build CSR directly so explicit zeros survive.
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(t, minlength=n), out=indptr[1:])
    return csr_array((c, h, indptr), shape=(n, n))


def geodesic_matrix(
    g: Graph,
    rows: Sequence[int],
    cols: Sequence[int],
    adjacency: csr_array | None = None,
) -> np.ndarray:
    """``out[i, j]`` = shortest-path cost from ``rows[i]`` to ``cols[j]`` (``inf`` if none)."""
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    for v in np.concatenate([rows, cols]):
        if not 0 <= v < g.node_count:
            raise UnknownNode(int(v))
    if rows.size == 0 or cols.size == 0:
        return np.zeros((rows.size, cols.size))
    adj = adjacency if adjacency is not None else min_cost_adjacency(g)
    uniq, inverse = np.unique(rows, return_inverse=True)
    out = np.empty((uniq.size, cols.size))
    # Each csgraph call returns |chunk| x n; keep that under ~20M entries.
    step = max(1, _CHUNK_CELLS // max(1, g.node_count))
    for lo in range(0, uniq.size, step):
        table = _csgraph_dijkstra(adj, directed=True, indices=uniq[lo:lo + step])
        out[lo:lo + step] = table[:, cols]
    return out[inverse.ravel()]
