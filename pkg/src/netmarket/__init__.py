"""Spatial market equilibria on road networks.

Build a road graph from line features, place buyers and sellers on it, and
compute either the demand each priced seller captures or the prices that
rationalise observed seller volumes, via uncapacitated min-cost flow duals.
"""

__version__ = "0.1.0"

from .alpha import (PowerDiagram, TransportPlan, TransportProblem, build_transport,
                    extract_power_diagram, probe_transport, solve_transport)
from .applications import (DemandReport, QualityRanking, RegionBalance, aggregate_demand,
                           balance_regions, rank_quality, spread_population)
from .equilibrium import (Buyer, Market, PriceVector, Seller, build_market, buyer_choices,
                          forward_prices, iceberg_costs, iceberg_prices, inverse_prices, split_node)
from .errors import *  # noqa: F401,F403
from .geo import GeoPoint, Polyline, SnapIndex, haversine_km, lines_to_graph, parse_lines, snap_agents
from .graph import (Arc, Graph, Node, build_graph, largest_component, make_bidirectional,
                    simplify_chains, weak_components)
from .mcf import (DegeneracyProbe, FlowProblem, FlowSolution, SlacknessReport, alternative_optimum,
                  oracle_min_cost, probe_degeneracy, solve_mcf, verify_slackness)
from .paths import LabelTree, Seed, dijkstra, geodesic_matrix
