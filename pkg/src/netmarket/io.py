"""CSV readers and writers for graphs, agents and results.

Every file is UTF-8 with LF line endings and a header row. Floats are
written with 12 significant digits, so reading a file back and writing it
again reproduces it byte for byte.
"""

from __future__ import annotations

import csv
import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from .equilibrium import Buyer, Seller
from .errors import ParseError
from .geo import SnapIndex
from .graph import Graph

__all__ = [
    "fmt",
    "read_buyers",
    "read_graph",
    "read_sellers",
    "read_table",
    "write_graph",
    "write_table",
]

NODE_COLUMNS = ("id", "lon", "lat", "tags")
ARC_COLUMNS = ("tail", "head", "cost", "tags")


def fmt(x) -> str:
    """Canonical text for a cell: 12 significant digits for floats, no ``-0``."""
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "yes" if x else "no"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        text = "%.12g" % x
        return "0" if text == "-0" else text
    return str(x)


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(x) for x in row])


def _cell(text: str):
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def read_table(path) -> tuple[list[str], list[list]]:
    """Header and rows with numeric-looking cells converted to ``int``/``float``."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file", line=1)
    return rows[0], [[_cell(c) for c in r] for r in rows[1:]]


def _tags_text(tags) -> str:
    return json.dumps(dict(tags), sort_keys=True, separators=(",", ":")) if tags else ""


def _tags_value(text: str, line: int) -> dict:
    if not text:
        return {}
    try:
        value = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"bad tags: {exc.msg}", line=line) from None
    if not isinstance(value, dict):
        raise ParseError("tags must be a JSON object", line=line)
    return {str(k): str(v) for k, v in value.items()}


def write_graph(g: Graph, directory) -> None:
    """``nodes.csv`` and ``arcs.csv`` in ``directory`` (created if needed)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_table(d / "nodes.csv", NODE_COLUMNS,
                ((v, g.lon[v], g.lat[v], _tags_text(g.node_tag(v))) for v in range(g.node_count)))
    write_table(d / "arcs.csv", ARC_COLUMNS,
                ((g.tail[a], g.head[a], g.cost[a], _tags_text(g.arc_tag(a)))
                 for a in range(g.arc_count)))


class _Rows:
    """Dict rows from a CSV file with 1-based line numbers for error messages."""

    def __init__(self, path, required: Sequence[str] = ()):
        self.path = path
        try:
            self._fh = open(path, encoding="utf-8", newline="")
        except OSError as exc:
            raise ParseError(f"cannot read {path}: {exc.strerror}") from None
        self._reader = csv.reader(self._fh)
        try:
            self.header = [h.strip() for h in next(self._reader)]
        except StopIteration:
            self._fh.close()
            raise ParseError(f"{path}: missing header", line=1) from None
        for col in required:
            if col not in self.header:
                self._fh.close()
                raise ParseError(f"{path}: missing column {col!r}", line=1)

    def __iter__(self):
        with self._fh:
            for row in self._reader:
                line = self._reader.line_num
                if not row or all(not c.strip() for c in row):
                    continue
                if len(row) != len(self.header):
                    raise ParseError(f"{self.path}: expected {len(self.header)} fields, got {len(row)}",
                                     line=line)
                yield line, dict(zip(self.header, (c.strip() for c in row)))

    def has(self, col: str) -> bool:
        return col in self.header


def _num(rec: dict, col: str, line: int, path, *, default=None) -> float:
    text = rec.get(col, "")
    if text == "":
        if default is not None:
            return default
        raise ParseError(f"{path}: empty {col!r}", line=line)
    try:
        value = float(text)
    except ValueError:
        raise ParseError(f"{path}: {col!r} is not a number: {text!r}", line=line) from None
    if math.isnan(value):
        raise ParseError(f"{path}: {col!r} is NaN", line=line)
    return value


def _int(rec: dict, col: str, line: int, path) -> int:
    text = rec.get(col, "")
    try:
        return int(text)
    except ValueError:
        raise ParseError(f"{path}: {col!r} is not an integer: {text!r}", line=line) from None


def read_graph(directory) -> Graph:
    """Inverse of :func:`write_graph`."""
    d = Path(directory)
    lon, lat, node_tags = [], [], []
    nodes = _Rows(d / "nodes.csv", ("id", "lon", "lat"))
    for line, rec in nodes:
        if _int(rec, "id", line, nodes.path) != len(lon):
            raise ParseError(f"{nodes.path}: node ids must be 0, 1, 2, ... in order", line=line)
        lon.append(_num(rec, "lon", line, nodes.path))
        lat.append(_num(rec, "lat", line, nodes.path))
        node_tags.append(_tags_value(rec.get("tags", ""), line))
    tail, head, cost, arc_tags = [], [], [], []
    arcs = _Rows(d / "arcs.csv", ("tail", "head", "cost"))
    for line, rec in arcs:
        tail.append(_int(rec, "tail", line, arcs.path))
        head.append(_int(rec, "head", line, arcs.path))
        cost.append(_num(rec, "cost", line, arcs.path))
        arc_tags.append(_tags_value(rec.get("tags", ""), line))
    try:
        return Graph.from_arrays(lon, lat, np.array(tail, dtype=np.int64), np.array(head, dtype=np.int64),
                                 cost, node_tags if any(node_tags) else None,
                                 arc_tags if any(arc_tags) else None)
    except ValueError as exc:
        raise ParseError(f"{d}: {exc}") from None


def _locate(rows: _Rows, rec: dict, line: int, index: SnapIndex | None) -> int:
    if rows.has("node") and rec.get("node", "") != "":
        return _int(rec, "node", line, rows.path)
    if not (rows.has("lon") and rows.has("lat")):
        raise ParseError(f"{rows.path}: need a 'node' column or 'lon' and 'lat'", line=1)
    lon, lat = _num(rec, "lon", line, rows.path), _num(rec, "lat", line, rows.path)
    if index is None:
        raise ParseError(f"{rows.path}: coordinates given but no graph to snap to", line=line)
    return index.nearest(lon, lat)[0]


def read_buyers(path, index: SnapIndex | None = None, *, require_region: bool = False) -> list[Buyer]:
    """Columns ``node`` or ``lon,lat``, then ``mass`` and optionally
    ``reservation_utility`` (empty = no outside option) and ``region``."""
    rows = _Rows(path, ("mass", "region") if require_region else ("mass",))
    out = []
    for line, rec in rows:
        node = _locate(rows, rec, line, index)
        mass = _num(rec, "mass", line, path)
        u = _num(rec, "reservation_utility", line, path, default=math.inf)
        region = rec.get("region") or None
        try:
            out.append(Buyer(node, mass, u, region))
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", line=line) from None
    return out


def read_sellers(path, index: SnapIndex | None = None, *, require_region: bool = False) -> list[Seller]:
    """Columns ``label``, ``node`` or ``lon,lat``, then ``price`` or ``supply``,
    optionally ``region``."""
    rows = _Rows(path, ("label", "region") if require_region else ("label",))
    if not (rows.has("price") or rows.has("supply")):
        raise ParseError(f"{path}: need a 'price' or 'supply' column", line=1)
    out = []
    for line, rec in rows:
        node = _locate(rows, rec, line, index)
        price = _num(rec, "price", line, path) if rec.get("price", "") != "" else None
        supply = _num(rec, "supply", line, path) if rec.get("supply", "") != "" else None
        try:
            out.append(Seller(node, rec["label"], price, supply, rec.get("region") or None))
        except ValueError as exc:
            raise ParseError(f"{path}: {exc}", line=line) from None
    return out
