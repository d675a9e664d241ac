import json
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netmarket.errors import EmptyGraph, ParseError, UnsupportedGeometry
from netmarket.geo import (GeoPoint, Polyline, SnapIndex, haversine_km, lines_to_graph, parse_lines,
                           snap_agents)

R = 6371.0088


def great_circle_km(lon1, lat1, lon2, lat2):
    # Spherical law of cosines in its atan2 form, independent of the package's haversine.
    p1, p2 = math.radians(lat1), math.radians(lat2)
    dl = math.radians(lon2 - lon1)
    num = math.hypot(math.cos(p2) * math.sin(dl),
                     math.cos(p1) * math.sin(p2) - math.sin(p1) * math.cos(p2) * math.cos(dl))
    den = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(dl)
    return R * math.atan2(num, den)


def feature(geometry, **props):
    return {"type": "Feature", "geometry": geometry, "properties": props}


def collection(*features):
    return json.dumps({"type": "FeatureCollection", "features": list(features)})


def test_single_linestring():
    text = collection(feature({"type": "LineString", "coordinates": [[0, 0], [0, 1], [1, 1]]},
                              road="N7", lanes=2))
    (line,) = parse_lines(text, "geojson")
    assert [(p.lon, p.lat) for p in line.points] == [(0, 0), (0, 1), (1, 1)]
    assert line.tags == {"road": "N7", "lanes": "2"}


def test_empty_collection():
    assert parse_lines(collection(), "geojson") == []


def test_mixed_geometries_skip_with_warning():
    text = collection(
        feature({"type": "LineString", "coordinates": [[0, 0], [1, 0]]}),
        feature({"type": "Point", "coordinates": [0, 0]}),
        feature({"type": "LineString", "coordinates": [[1, 0], [2, 0]]}),
    )
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        lines = parse_lines(text.encode(), "geojson")
    assert len(lines) == 2
    skipped = [w for w in caught if issubclass(w.category, UnsupportedGeometry)]
    assert len(skipped) == 1


def test_multilinestring_splits():
    text = collection(feature({"type": "MultiLineString",
                               "coordinates": [[[0, 0], [1, 0]], [[5, 5], [6, 5], [7, 5]]]}))
    assert [len(l.points) for l in parse_lines(text, "geojson")] == [2, 3]


def test_bad_json_reports_position():
    with pytest.raises(ParseError) as err:
        parse_lines('{"type": "FeatureCollection",\n "features": [}', "geojson")
    assert err.value.line == 2


def test_csv_edges():
    text = "tail_lon,tail_lat,head_lon,head_lat,cost,name\n0,0,0,1,,a\n0,1,1,1,5,b\n"
    lines = parse_lines(text, "csv-edges")
    assert len(lines) == 2
    assert lines[0].cost is None and lines[1].cost == 5.0
    assert lines[1].tags == {"name": "b"}
    g = lines_to_graph(lines)
    assert g.node_count == 3 and g.arc_count == 4


def test_csv_edges_bad_row_has_line_number():
    text = "tail_lon,tail_lat,head_lon,head_lat,cost\n0,0,0,1,1\n0,x,1,1,2\n"
    with pytest.raises(ParseError) as err:
        parse_lines(text, "csv-edges")
    assert err.value.line == 3


def test_polyline_rejects_repeated_point():
    with pytest.raises(ValueError):
        Polyline((GeoPoint(0, 0), GeoPoint(0, 0)), {})


def test_shared_endpoint_makes_three_nodes():
    lines = [Polyline((GeoPoint(0, 0), GeoPoint(0, 0.01)), {}),
             Polyline((GeoPoint(0, 0.01), GeoPoint(0.01, 0.01)), {})]
    g = lines_to_graph(lines)
    assert g.node_count == 3 and g.arc_count == 4


def test_snap_tolerance_merges_close_endpoints():
    half_metre = 0.5 / (1000 * math.pi * R / 180)
    lines = [Polyline((GeoPoint(0, 0), GeoPoint(0, 0.01)), {}),
             Polyline((GeoPoint(0, 0.01 + half_metre), GeoPoint(0.01, 0.01)), {})]
    assert lines_to_graph(lines, snap_tol=1.0).node_count == 3
    assert lines_to_graph(lines, snap_tol=0.1).node_count == 4


def test_merging_is_transitive():
    step = 0.8 / (1000 * math.pi * R / 180)  # 0.8 m apart: a~b, b~c but a, c are 1.6 m apart
    pts = [GeoPoint(0, 0), GeoPoint(0, step), GeoPoint(0, 2 * step)]
    lines = [Polyline((pts[0], GeoPoint(1, 1)), {}), Polyline((pts[1], GeoPoint(2, 2)), {}),
             Polyline((pts[2], GeoPoint(3, 3)), {})]
    assert lines_to_graph(lines, snap_tol=1.0).node_count == 4


def test_cost_per_km():
    lat1 = 1.0 / (math.pi * R / 180)  # one kilometre north of the equator
    g = lines_to_graph([Polyline((GeoPoint(0, 0), GeoPoint(0, lat1)), {})], per_km_cost=0.2)
    expected = great_circle_km(0, 0, 0, lat1) * 0.2
    assert g.cost[0] == pytest.approx(expected, rel=1e-9)
    assert expected == pytest.approx(0.2, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(-179, 179), st.floats(-80, 80), st.floats(-179, 179), st.floats(-80, 80))
def test_haversine_matches_independent_formula(lon1, lat1, lon2, lat2):
    assert float(haversine_km(lon1, lat1, lon2, lat2)) == pytest.approx(
        great_circle_km(lon1, lat1, lon2, lat2), rel=1e-9, abs=1e-9)


def test_snap_coincident_point():
    idx = SnapIndex([0, 1, 2], [0, 0, 0])
    assert snap_agents(idx, [GeoPoint(1, 0)]) == [(1, 0.0)]


def test_snap_tie_goes_to_smaller_id():
    lon = [5, 5, 5, 5, 0.0, 5, 5, 2.0]
    lat = [5, 6, 7, 8, 0.0, 9, 9.5, 0.0]
    idx = SnapIndex(lon, lat)
    (node, _), = snap_agents(idx, [(1.0, 0.0)])
    assert node == 4


def test_snap_empty_graph():
    with pytest.raises(EmptyGraph):
        snap_agents(SnapIndex([], []), [(0, 0)])


@pytest.mark.parametrize("seed", range(20))
def test_snap_matches_linear_scan(seed):
    rng = np.random.default_rng(seed)
    lon, lat = rng.uniform(-10, 10, 5), rng.uniform(40, 50, 5)
    points = list(zip(rng.uniform(-12, 12, 3), rng.uniform(38, 52, 3)))
    got = snap_agents(SnapIndex(lon, lat), points)
    for (plon, plat), (node, dist_m) in zip(points, got):
        d = [great_circle_km(plon, plat, a, b) for a, b in zip(lon, lat)]
        assert node == int(np.argmin(d))
        assert dist_m == pytest.approx(min(d) * 1000, rel=1e-9)
