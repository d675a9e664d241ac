"""Turn line features (GeoJSON or CSV edge lists) into a road graph and snap agents to it."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import warnings
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import IO, Literal

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyGraph, ParseError, UnsupportedGeometry
from .graph import Graph, make_bidirectional

__all__ = [
    "EARTH_RADIUS_KM",
    "GeoPoint",
    "Polyline",
    "SnapIndex",
    "haversine_km",
    "lines_to_graph",
    "parse_lines",
    "snap_agents",
]

log = logging.getLogger(__name__)

EARTH_RADIUS_KM = 6371.0088
KM_PER_DEG_LAT = math.pi * EARTH_RADIUS_KM / 180.0
CSV_EDGE_COLUMNS = ("tail_lon", "tail_lat", "head_lon", "head_lat", "cost")


def haversine_km(lon1, lat1, lon2, lat2):
    """Great-circle distance on a sphere of radius :data:`EARTH_RADIUS_KM`."""
    lon1, lat1, lon2, lat2 = (np.radians(np.asarray(x, dtype=np.float64))
                              for x in (lon1, lat1, lon2, lat2))
    a = (np.sin((lat2 - lat1) / 2) ** 2
         + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
    d = 2 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))
    return float(d) if d.ndim == 0 else d


@dataclass(frozen=True)
class GeoPoint:
    lon: float
    lat: float

    def __post_init__(self):
        if not (math.isfinite(self.lon) and math.isfinite(self.lat)):
            raise ValueError(f"non-finite coordinate ({self.lon}, {self.lat})")
        if not (-180 <= self.lon <= 180 and -90 <= self.lat <= 90):
            raise ValueError(f"coordinate out of range ({self.lon}, {self.lat})")


@dataclass(frozen=True)
class Polyline:
    """Ordered points of one road feature.

    ``cost`` overrides the haversine-based cost and is only meaningful for
    two-point lines (the CSV edge format).
    """

    points: tuple[GeoPoint, ...]
    tags: Mapping[str, str] = field(default_factory=dict)
    cost: float | None = None

    def __post_init__(self):
        if len(self.points) < 2:
            raise ValueError("a polyline needs at least two points")
        for p, q in zip(self.points, self.points[1:]):
            if p == q:
                raise ValueError("consecutive polyline points must differ")
        if self.cost is not None and len(self.points) != 2:
            raise ValueError("an explicit cost requires a two-point line")


def _read_text(stream: bytes | str | IO) -> str:
    if hasattr(stream, "read"):
        stream = stream.read()
    if isinstance(stream, bytes):
        try:
            return stream.decode("utf-8-sig")
        except UnicodeDecodeError as exc:
            raise ParseError(f"input is not UTF-8: {exc.reason}", offset=exc.start) from None
    return stream


def _point(coord, where: str) -> GeoPoint:
    if not isinstance(coord, (list, tuple)) or len(coord) < 2:
        raise ParseError(f"{where}: position must be [lon, lat]")
    try:
        return GeoPoint(float(coord[0]), float(coord[1]))
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{where}: {exc}") from None


def _line(coords, tags: dict, where: str) -> Polyline | None:
    if not isinstance(coords, list):
        raise ParseError(f"{where}: coordinates must be an array")
    pts: list[GeoPoint] = []
    for i, c in enumerate(coords):
        p = _point(c, f"{where}, position {i}")
        if not pts or pts[-1] != p:
            pts.append(p)
    if len(pts) < 2:
        warnings.warn(UnsupportedGeometry("degenerate LineString"), stacklevel=4)
        return None
    return Polyline(tuple(pts), tags)


def _parse_geojson(text: str) -> list[Polyline]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, offset=exc.pos) from None
    if not isinstance(doc, dict):
        raise ParseError("top-level GeoJSON value must be an object")
    if doc.get("type") == "FeatureCollection":
        features = doc.get("features")
        if not isinstance(features, list):
            raise ParseError("FeatureCollection.features must be an array")
    elif doc.get("type") == "Feature":
        features = [doc]
    else:
        raise ParseError(f"expected a FeatureCollection, got type {doc.get('type')!r}")

    lines: list[Polyline] = []
    skipped = 0
    for i, feat in enumerate(features):
        if not isinstance(feat, dict) or feat.get("type") != "Feature":
            raise ParseError(f"feature {i} is not a GeoJSON Feature")
        geom = feat.get("geometry")
        props = feat.get("properties") or {}
        tags = {str(k): v if isinstance(v, str) else json.dumps(v)
                for k, v in props.items() if v is not None}
        kind = geom.get("type") if isinstance(geom, dict) else "null"
        if kind == "LineString":
            line = _line(geom.get("coordinates"), tags, f"feature {i}")
            parts = [line]
        elif kind == "MultiLineString":
            coords = geom.get("coordinates")
            if not isinstance(coords, list):
                raise ParseError(f"feature {i}: coordinates must be an array")
            parts = [_line(part, tags, f"feature {i}, part {j}") for j, part in enumerate(coords)]
        else:
            warnings.warn(UnsupportedGeometry(str(kind)), stacklevel=3)
            skipped += 1
            continue
        lines.extend(p for p in parts if p is not None)
    if skipped:
        log.warning("skipped %d non-line feature(s)", skipped)
    return lines


def _parse_csv_edges(text: str) -> list[Polyline]:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("missing header", line=1) from None
    header = [h.strip() for h in header]
    if tuple(header[:5]) != CSV_EDGE_COLUMNS:
        raise ParseError(f"header must start with {','.join(CSV_EDGE_COLUMNS)}", line=1)
    tag_names = header[5:]
    lines = []
    for row in reader:
        lineno = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} fields, got {len(row)}", line=lineno)
        try:
            tail = GeoPoint(float(row[0]), float(row[1]))
            head = GeoPoint(float(row[2]), float(row[3]))
            cost = float(row[4]) if row[4].strip() else None
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from None
        if cost is not None and not (math.isfinite(cost) and cost >= 0):
            raise ParseError(f"cost must be a nonnegative number, got {row[4]!r}", line=lineno)
        if tail == head:
            raise ParseError("edge endpoints coincide", line=lineno)
        tags = {k: v for k, v in zip(tag_names, row[5:]) if v != ""}
        lines.append(Polyline((tail, head), tags, cost))
    return lines


def parse_lines(stream: bytes | str | IO, format: Literal["geojson", "csv-edges"]) -> list[Polyline]:
    """Read line features.

    GeoJSON yields one polyline per LineString (and per MultiLineString part),
    with feature properties as tags. Other geometries are skipped with an
    :class:`UnsupportedGeometry` warning each. ``csv-edges`` yields one
    two-point polyline per row.
    """
    text = _read_text(stream)
    if format == "geojson":
        return _parse_geojson(text)
    if format == "csv-edges":
        return _parse_csv_edges(text)
    raise ValueError(f"unknown format {format!r}")


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        parent = self.parent
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Smaller index stays root so node order follows first appearance.
            if rb < ra:
                ra, rb = rb, ra
            self.parent[rb] = ra


def _snap_groups(lon: np.ndarray, lat: np.ndarray, snap_tol: float) -> np.ndarray:
    """Root point index for every point after merging points within ``snap_tol`` metres."""
    n = lon.size
    uf = _UnionFind(n)
    exact: dict[tuple[float, float], int] = {}
    for i, key in enumerate(zip(lon.tolist(), lat.tolist())):
        j = exact.setdefault(key, i)
        if j != i:
            uf.union(j, i)
    if snap_tol > 0 and n:
        reps = sorted(set(exact.values()))
        cell_lat = snap_tol / (KM_PER_DEG_LAT * 1000.0)
        coslat = max(math.cos(math.radians(float(np.max(np.abs(lat))))), 1e-6)
        cell_lon = cell_lat / coslat
        cells: dict[tuple[int, int], list[int]] = {}
        for i in reps:
            key = (math.floor(lat[i] / cell_lat), math.floor(lon[i] / cell_lon))
            cells.setdefault(key, []).append(i)
        tol_km = snap_tol / 1000.0
        for (cy, cx), members in cells.items():
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    others = cells.get((cy + dy, cx + dx))
                    if not others:
                        continue
                    for i in members:
                        for j in others:
                            if j > i and haversine_km(lon[i], lat[i], lon[j], lat[j]) <= tol_km:
                                uf.union(i, j)
    return np.array([uf.find(i) for i in range(n)], dtype=np.int64)


def lines_to_graph(lines: Sequence[Polyline], snap_tol: float = 1.0, per_km_cost: float = 1.0) -> Graph:
    """Build a bidirectional graph from polylines.

    Every polyline vertex becomes a node; vertices within ``snap_tol`` metres
    are merged transitively and the merged node sits at the first-seen
    vertex. Consecutive vertices give an arc costing haversine km between
    the merged nodes times ``per_km_cost`` (or the line's explicit cost).
    """
    if snap_tol < 0:
        raise ValueError("snap_tol must be nonnegative")
    if not per_km_cost > 0:
        raise ValueError("per_km_cost must be positive")
    lon = np.array([p.lon for line in lines for p in line.points], dtype=np.float64)
    lat = np.array([p.lat for line in lines for p in line.points], dtype=np.float64)
    root = _snap_groups(lon, lat, snap_tol)
    roots, node_of = np.unique(root, return_inverse=True)
    node_of = node_of.ravel()
    node_lon, node_lat = lon[roots], lat[roots]

    tail, head, cost, tags = [], [], [], []
    k = 0
    for line in lines:
        ids = node_of[k:k + len(line.points)]
        k += len(line.points)
        for a, b in zip(ids[:-1].tolist(), ids[1:].tolist()):
            if a == b:
                continue
            tail.append(a)
            head.append(b)
            if line.cost is not None:
                cost.append(line.cost)
            else:
                cost.append(haversine_km(node_lon[a], node_lat[a], node_lon[b], node_lat[b])
                            * per_km_cost)
            tags.append(dict(line.tags))
    g = Graph.from_arrays(node_lon, node_lat, np.array(tail, dtype=np.int64),
                          np.array(head, dtype=np.int64), np.array(cost, dtype=np.float64),
                          arc_tags=tags if any(tags) else None)
    return make_bidirectional(g)


def _unit_vectors(lon, lat) -> np.ndarray:
    lon, lat = np.radians(np.asarray(lon, float)), np.radians(np.asarray(lat, float))
    return np.column_stack([np.cos(lat) * np.cos(lon), np.cos(lat) * np.sin(lon), np.sin(lat)])


class SnapIndex:
    """Nearest-node lookup by great-circle distance.

    Nodes are indexed as unit vectors in a k-d tree; chord length is monotone
    in arc length, so the tree's nearest neighbour is the great-circle one.
    """

    def __init__(self, lon, lat):
        self.lon = np.asarray(lon, dtype=np.float64)
        self.lat = np.asarray(lat, dtype=np.float64)
        self._tree = cKDTree(_unit_vectors(self.lon, self.lat)) if self.lon.size else None

    @classmethod
    def from_graph(cls, g: Graph) -> SnapIndex:
        return cls(g.lon, g.lat)

    def __len__(self) -> int:
        return int(self.lon.size)

    def nearest(self, lon: float, lat: float) -> tuple[int, float]:
        if self._tree is None:
            raise EmptyGraph("cannot snap to an empty graph")
        x = _unit_vectors([lon], [lat])[0]
        k = min(8, len(self))
        while True:
            _, idx = self._tree.query(x, k=k)
            idx = np.atleast_1d(idx)
            d = haversine_km(lon, lat, self.lon[idx], self.lat[idx]) * 1000.0
            best = float(d.min())
            ties = d <= best + 1e-9 * max(1.0, best)
            if not ties[-1] or k == len(self):
                j = int(idx[ties].min())
                return j, float(haversine_km(lon, lat, self.lon[j], self.lat[j]) * 1000.0)
            k = min(2 * k, len(self))


def snap_agents(index: SnapIndex, points: Iterable[GeoPoint | tuple[float, float]]) -> list[tuple[int, float]]:
    """Nearest node and distance in metres for each point; ties go to the smaller node id."""
    if len(index) == 0:
        raise EmptyGraph("cannot snap to an empty graph")
    out = []
    for p in points:
        lon, lat = (p.lon, p.lat) if isinstance(p, GeoPoint) else p
        out.append(index.nearest(lon, lat))
    return out
