"""Exception and warning types raised across the package."""


class NetMarketError(Exception):
    """Base class for all errors raised by netmarket."""


class NegativeCost(NetMarketError, ValueError):
    def __init__(self, arc_index: int, cost: float):
        super().__init__(f"arc {arc_index} has negative cost {cost!r}")
        self.arc_index = arc_index
        self.cost = cost


class DanglingEndpoint(NetMarketError, ValueError):
    def __init__(self, arc_index: int, node: int):
        super().__init__(f"arc {arc_index} references unknown node {node}")
        self.arc_index = arc_index
        self.node = node


class ParseError(NetMarketError, ValueError):
    """Malformed input. ``line`` is 1-based when known, ``offset`` a byte offset."""

    def __init__(self, reason: str, line: int | None = None, offset: int | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"byte {offset}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + reason)
        self.reason = reason
        self.line = line
        self.offset = offset


class UnsupportedGeometry(UserWarning):
    """Emitted once per skipped non-line feature."""

    def __init__(self, kind: str):
        super().__init__(f"skipped unsupported geometry {kind!r}")
        self.kind = kind


class EmptyGraph(NetMarketError, ValueError):
    pass


class Unbalanced(NetMarketError, ValueError):
    def __init__(self, imbalance: float, region: str | None = None):
        where = f" in region {region!r}" if region is not None else ""
        super().__init__(f"supply and demand do not balance{where}: net {imbalance!r}")
        self.imbalance = imbalance
        self.region = region


class Disconnected(NetMarketError, RuntimeError):
    def __init__(self, node: int, message: str | None = None):
        super().__init__(message or f"node {node} cannot reach any node with unmet demand")
        self.node = node


class Infeasible(NetMarketError, RuntimeError):
    pass


class DimensionMismatch(NetMarketError, ValueError):
    pass


class TooLarge(NetMarketError, ValueError):
    pass


class UnknownNode(NetMarketError, KeyError):
    def __init__(self, node, message: str | None = None):
        super().__init__(message or f"unknown node {node!r}")
        self.node = node

    def __str__(self) -> str:
        return str(self.args[0])


class MixedSellerModes(NetMarketError, ValueError):
    pass


class ModeMismatch(NetMarketError, ValueError):
    pass


class TauOutOfRange(NetMarketError, ValueError):
    pass


class NegativeAlpha(NetMarketError, ValueError):
    """Raised for any exponent below 1, not only negative ones."""


class EmptyArea(NetMarketError, ValueError):
    def __init__(self, area_id):
        super().__init__(f"area {area_id!r} has population but no nodes")
        self.area_id = area_id


class EmptyRegionSide(NetMarketError, ValueError):
    def __init__(self, region, side: str):
        super().__init__(f"region {region!r} has no {side}")
        self.region = region
        self.side = side
