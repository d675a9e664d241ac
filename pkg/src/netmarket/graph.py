"""Directed road-network graph and its construction-time transformations."""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_array
from scipy.sparse.csgraph import connected_components

from .errors import DanglingEndpoint, NegativeCost

__all__ = [
    "Arc",
    "Graph",
    "Node",
    "build_graph",
    "largest_component",
    "make_bidirectional",
    "simplify_chains",
    "weak_components",
]


@dataclass(frozen=True)
class Node:
    id: int
    lon: float = 0.0
    lat: float = 0.0
    tags: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Arc:
    tail: int
    head: int
    cost: float
    tags: Mapping[str, str] = field(default_factory=dict)


def _csr(keys: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.argsort(keys, kind="stable")
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(keys, minlength=n), out=ptr[1:])
    return ptr, order.astype(np.int64)


class Graph:
    """Immutable directed graph with located nodes and nonnegative arc costs.

    Nodes and arcs are stored column-wise. ``out_ptr``/``out_arc`` and
    ``in_ptr``/``in_arc`` are CSR indices: the arcs leaving ``v`` are
    ``out_arc[out_ptr[v]:out_ptr[v + 1]]`` in ascending arc index.

    Use :func:`build_graph` or :meth:`Graph.from_arrays` to construct one;
    both validate their input.
    """

    def __init__(
        self,
        lon: np.ndarray,
        lat: np.ndarray,
        tail: np.ndarray,
        head: np.ndarray,
        cost: np.ndarray,
        node_tags: Sequence[Mapping[str, str]] | None = None,
        arc_tags: Sequence[Mapping[str, str]] | None = None,
    ):
        self.lon = np.ascontiguousarray(lon, dtype=np.float64)
        self.lat = np.ascontiguousarray(lat, dtype=np.float64)
        self.tail = np.ascontiguousarray(tail, dtype=np.int64)
        self.head = np.ascontiguousarray(head, dtype=np.int64)
        self.cost = np.ascontiguousarray(cost, dtype=np.float64)
        self.node_tags = list(node_tags) if node_tags is not None else None
        self.arc_tags = list(arc_tags) if arc_tags is not None else None
        n = self.lon.size
        self.out_ptr, self.out_arc = _csr(self.tail, n)
        self.in_ptr, self.in_arc = _csr(self.head, n)
        for arr in (self.lon, self.lat, self.tail, self.head, self.cost,
                    self.out_ptr, self.out_arc, self.in_ptr, self.in_arc):
            arr.flags.writeable = False

    @classmethod
    def from_arrays(
        cls,
        lon,
        lat,
        tail,
        head,
        cost,
        node_tags: Sequence[Mapping[str, str]] | None = None,
        arc_tags: Sequence[Mapping[str, str]] | None = None,
    ) -> Graph:
        """Validate column arrays and build a graph. Self-loops are dropped."""
        # Copies: the graph freezes its arrays and must not freeze the caller's.
        lon = np.array(lon, dtype=np.float64).ravel()
        lat = np.array(lat, dtype=np.float64).ravel()
        tail = np.array(tail, dtype=np.int64).ravel()
        head = np.array(head, dtype=np.int64).ravel()
        cost = np.array(cost, dtype=np.float64).ravel()
        n = lon.size
        if lat.size != n:
            raise ValueError("lon and lat must have the same length")
        if not (tail.size == head.size == cost.size):
            raise ValueError("tail, head and cost must have the same length")
        if node_tags is not None and len(node_tags) != n:
            raise ValueError("node_tags length does not match node count")
        if arc_tags is not None and len(arc_tags) != tail.size:
            raise ValueError("arc_tags length does not match arc count")
        if n and (np.any(np.abs(lat) > 90) or np.any(np.abs(lon) > 180)
                  or not np.all(np.isfinite(lat)) or not np.all(np.isfinite(lon))):
            bad = int(np.flatnonzero((np.abs(lat) > 90) | (np.abs(lon) > 180)
                                     | ~np.isfinite(lat) | ~np.isfinite(lon))[0])
            raise ValueError(f"node {bad} has coordinates out of range")
        bad = np.flatnonzero((tail < 0) | (tail >= n))
        if bad.size:
            raise DanglingEndpoint(int(bad[0]), int(tail[bad[0]]))
        bad = np.flatnonzero((head < 0) | (head >= n))
        if bad.size:
            raise DanglingEndpoint(int(bad[0]), int(head[bad[0]]))
        bad = np.flatnonzero(~(cost >= 0) | ~np.isfinite(cost))
        if bad.size:
            raise NegativeCost(int(bad[0]), float(cost[bad[0]]))
        keep = tail != head
        if not keep.all():
            tail, head, cost = tail[keep], head[keep], cost[keep]
            if arc_tags is not None:
                arc_tags = [t for t, k in zip(arc_tags, keep) if k]
        return cls(lon, lat, tail, head, cost, node_tags, arc_tags)

    @property
    def node_count(self) -> int:
        return int(self.lon.size)

    @property
    def arc_count(self) -> int:
        return int(self.tail.size)

    def __len__(self) -> int:
        return self.node_count

    def __repr__(self) -> str:
        return f"Graph(nodes={self.node_count}, arcs={self.arc_count})"

    def node(self, v: int) -> Node:
        tags = self.node_tags[v] if self.node_tags is not None else {}
        return Node(int(v), float(self.lon[v]), float(self.lat[v]), tags)

    def arc(self, a: int) -> Arc:
        tags = self.arc_tags[a] if self.arc_tags is not None else {}
        return Arc(int(self.tail[a]), int(self.head[a]), float(self.cost[a]), tags)

    def nodes(self) -> Iterator[Node]:
        return (self.node(v) for v in range(self.node_count))

    def arcs(self) -> Iterator[Arc]:
        return (self.arc(a) for a in range(self.arc_count))

    def out_arcs(self, v: int) -> np.ndarray:
        return self.out_arc[self.out_ptr[v]:self.out_ptr[v + 1]]

    def in_arcs(self, v: int) -> np.ndarray:
        return self.in_arc[self.in_ptr[v]:self.in_ptr[v + 1]]

    def out_degree(self, v: int) -> int:
        return int(self.out_ptr[v + 1] - self.out_ptr[v])

    def in_degree(self, v: int) -> int:
        return int(self.in_ptr[v + 1] - self.in_ptr[v])

    def node_tag(self, v: int) -> Mapping[str, str]:
        return self.node_tags[v] if self.node_tags is not None else {}

    def arc_tag(self, a: int) -> Mapping[str, str]:
        return self.arc_tags[a] if self.arc_tags is not None else {}

    def with_costs(self, cost) -> Graph:
        """Same topology and tags with a new cost vector."""
        return Graph.from_arrays(self.lon, self.lat, self.tail, self.head, cost,
                                 self.node_tags, self.arc_tags)

    def subgraph(self, keep: np.ndarray) -> tuple[Graph, np.ndarray]:
        """Induced subgraph on the boolean node mask ``keep``.

        Returns the subgraph and an old->new id mapping (-1 for dropped nodes).
        Surviving nodes and arcs keep their relative order.
        """
        keep = np.asarray(keep, dtype=bool)
        mapping = np.full(self.node_count, -1, dtype=np.int64)
        mapping[keep] = np.arange(int(keep.sum()))
        arc_keep = keep[self.tail] & keep[self.head] if self.arc_count else np.zeros(0, bool)
        node_tags = None
        if self.node_tags is not None:
            node_tags = [t for t, k in zip(self.node_tags, keep) if k]
        arc_tags = None
        if self.arc_tags is not None:
            arc_tags = [t for t, k in zip(self.arc_tags, arc_keep) if k]
        sub = Graph(self.lon[keep], self.lat[keep], mapping[self.tail[arc_keep]],
                    mapping[self.head[arc_keep]], self.cost[arc_keep], node_tags, arc_tags)
        return sub, mapping


def build_graph(nodes: Sequence[Node], arcs: Iterable[Arc]) -> Graph:
    """Build a :class:`Graph` from node and arc records.

    ``nodes[i].id`` must equal ``i``. Arc order is preserved; self-loops are
    dropped.
    """
    arcs = list(arcs)
    for i, node in enumerate(nodes):
        if node.id != i:
            raise ValueError(f"node at position {i} has id {node.id}; ids must be dense")
    n = len(nodes)
    for a, arc in enumerate(arcs):
        for end in (arc.tail, arc.head):
            if not 0 <= end < n:
                raise DanglingEndpoint(a, end)
        if not arc.cost >= 0:
            raise NegativeCost(a, arc.cost)
    any_node_tags = any(node.tags for node in nodes)
    any_arc_tags = any(arc.tags for arc in arcs)
    return Graph.from_arrays(
        [node.lon for node in nodes],
        [node.lat for node in nodes],
        np.array([arc.tail for arc in arcs], dtype=np.int64),
        np.array([arc.head for arc in arcs], dtype=np.int64),
        np.array([arc.cost for arc in arcs], dtype=np.float64),
        [dict(node.tags) for node in nodes] if any_node_tags else None,
        [dict(arc.tags) for arc in arcs] if any_arc_tags else None,
    )


def weak_components(g: Graph) -> tuple[int, np.ndarray]:
    """Weakly connected components: ``(count, label per node)``."""
    n = g.node_count
    if n == 0:
        return 0, np.zeros(0, dtype=np.int64)
    adj = coo_array((np.ones(g.arc_count), (g.tail, g.head)), shape=(n, n))
    count, labels = connected_components(adj, directed=True, connection="weak")
    return int(count), labels.astype(np.int64)


def largest_component(g: Graph) -> tuple[Graph, np.ndarray]:
    """Keep the largest weakly connected component.

    Ties go to the component holding the smallest node id. Returns the
    re-indexed subgraph and the old->new mapping.
    """
    if g.node_count == 0:
        return g, np.zeros(0, dtype=np.int64)
    count, labels = weak_components(g)
    sizes = np.bincount(labels, minlength=count)
    first = np.full(count, g.node_count, dtype=np.int64)
    np.minimum.at(first, labels, np.arange(g.node_count))
    best = min(range(count), key=lambda c: (-sizes[c], first[c]))
    return g.subgraph(labels == best)


def make_bidirectional(g: Graph) -> Graph:
    """Add ``(v, u, c)`` for every arc ``(u, v, c)`` that has no reverse arc."""
    if g.arc_count == 0:
        return g
    n = g.node_count
    keys = g.tail * n + g.head
    missing = ~np.isin(g.head * n + g.tail, keys)
    if not missing.any():
        return g
    arc_tags = None
    if g.arc_tags is not None:
        arc_tags = g.arc_tags + [g.arc_tags[a] for a in np.flatnonzero(missing)]
    return Graph(
        g.lon, g.lat,
        np.concatenate([g.tail, g.head[missing]]),
        np.concatenate([g.head, g.tail[missing]]),
        np.concatenate([g.cost, g.cost[missing]]),
        g.node_tags, arc_tags,
    )


def _merge_tags(chain: list[Mapping[str, str]]) -> dict[str, str]:
    merged: dict[str, list[str]] = {}
    for tags in chain:
        for key, value in tags.items():
            values = merged.setdefault(key, [])
            if value not in values:
                values.append(value)
    return {key: ";".join(values) for key, values in merged.items()}


def simplify_chains(g: Graph, protected: Iterable[int] = ()) -> tuple[Graph, np.ndarray]:
    """Contract pass-through nodes, summing costs along each contracted chain.

    A node is pass-through when it is not protected, has exactly two distinct
    neighbours ``a`` and ``b``, and its arcs are either a one-way pair
    ``a->v, v->b`` or a two-way set with exactly one arc in each of the four
    directions. Maximal runs of pass-through nodes between two surviving
    nodes collapse to one arc per direction.

    A run that would close on itself (a loop hanging off a single surviving
    node, or a component that is one bare cycle) keeps the node nearest the
    cost midpoint of the loop as a second survivor, so no self-loop appears.

    Returns the simplified graph and an old->new mapping (-1 for removed).
    """
    n = g.node_count
    protected = {int(v) for v in protected}
    tail = g.tail.tolist()
    head = g.head.tolist()
    cost = g.cost.tolist()
    out_ptr = g.out_ptr.tolist()
    out_arc = g.out_arc.tolist()
    in_ptr = g.in_ptr.tolist()
    in_arc = g.in_arc.tolist()

    passthrough = [False] * n
    for v in range(n):
        if v in protected:
            continue
        outs = out_arc[out_ptr[v]:out_ptr[v + 1]]
        ins = in_arc[in_ptr[v]:in_ptr[v + 1]]
        nbrs = {head[a] for a in outs} | {tail[a] for a in ins}
        if len(nbrs) != 2:
            continue
        out_to = sorted(head[a] for a in outs)
        in_from = sorted(tail[a] for a in ins)
        if len(outs) == 1 and len(ins) == 1:
            passthrough[v] = out_to[0] != in_from[0]
        elif len(outs) == 2 and len(ins) == 2:
            passthrough[v] = out_to == in_from == sorted(nbrs)

    def next_arc(v: int, came_from: int) -> int:
        outs = out_arc[out_ptr[v]:out_ptr[v + 1]]
        if len(outs) == 1:
            return outs[0]
        return outs[0] if head[outs[0]] != came_from else outs[1]

    def walk(a: int) -> list[int]:
        chain = [a]
        while passthrough[head[chain[-1]]]:
            v = head[chain[-1]]
            chain.append(next_arc(v, tail[chain[-1]]))
            if len(chain) > n + 1:  # pragma: no cover - guarded by the loop-breaking pass
                raise RuntimeError("chain walk did not terminate")
        return chain

    def midpoint(chain: list[int]) -> int:
        total = sum(cost[a] for a in chain)
        best, best_gap, acc = head[chain[0]], None, 0.0
        for a in chain[:-1]:
            acc += cost[a]
            gap = abs(acc - total / 2)
            if best_gap is None or gap < best_gap:
                best, best_gap = head[a], gap
        return best

    # Components that are one bare cycle have no survivor yet: seed the smallest id.
    reached = [False] * n
    for v in range(n):
        if passthrough[v]:
            continue
        reached[v] = True
        for a in out_arc[out_ptr[v]:out_ptr[v + 1]]:
            for b in walk(a):
                reached[head[b]] = True
    for v in range(n):
        if passthrough[v] and not reached[v]:
            passthrough[v] = False
            reached[v] = True
            stack = [v]
            while stack:
                u = stack.pop()
                for b in out_arc[out_ptr[u]:out_ptr[u + 1]]:
                    if not reached[head[b]]:
                        reached[head[b]] = True
                        stack.append(head[b])

    # Break loops that return to their starting survivor.
    handled = [False] * n
    for v in range(n):
        if passthrough[v]:
            continue
        for a in out_arc[out_ptr[v]:out_ptr[v + 1]]:
            first = head[a]
            if not passthrough[first] or handled[first]:
                continue
            chain = walk(a)
            if head[chain[-1]] == v:
                for b in chain[:-1]:
                    handled[head[b]] = True
                passthrough[midpoint(chain)] = False

    keep = np.array([not p for p in passthrough], dtype=bool)
    mapping = np.full(n, -1, dtype=np.int64)
    mapping[keep] = np.arange(int(keep.sum()))
    new_tail, new_head, new_cost, new_tags = [], [], [], []
    tagged = g.arc_tags is not None
    for a in range(g.arc_count):
        if passthrough[tail[a]]:
            continue
        chain = walk(a) if passthrough[head[a]] else [a]
        new_tail.append(mapping[tail[a]])
        new_head.append(mapping[head[chain[-1]]])
        new_cost.append(sum(cost[b] for b in chain) if len(chain) > 1 else cost[a])
        if tagged:
            new_tags.append(_merge_tags([g.arc_tags[b] for b in chain]) if len(chain) > 1
                            else g.arc_tags[a])
    node_tags = [t for t, k in zip(g.node_tags, keep) if k] if g.node_tags is not None else None
    simplified = Graph.from_arrays(
        g.lon[keep], g.lat[keep],
        np.array(new_tail, dtype=np.int64), np.array(new_head, dtype=np.int64),
        np.array(new_cost, dtype=np.float64), node_tags, new_tags if tagged else None,
    )
    return simplified, mapping
