import json
import math

import pytest

from firerisk.geo import (EARTH_RADIUS_M, GeoPoint, OverlayKind, Polygon,
                          geohash_encode, geohash_neighbors, haversine_m,
                          load_polygons, point_in_polygon, polygons_to_geojson,
                          within_radius, write_polygons)


def haversine_oracle(lat1, lon1, lat2, lon2):
    """Direct transcription of the formula, kept independent of geo.py."""
    phi1, phi2 = math.radians(lat1), math.radians(lat2)
    dphi = phi2 - phi1
    dlmb = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2) ** 2
    return 2 * 6_371_000.0 * math.atan2(math.sqrt(a), math.sqrt(1 - a))


def square(lo=0.0, hi=1.0, id_="sq"):
    ring = (GeoPoint(lo, lo), GeoPoint(lo, hi), GeoPoint(hi, hi), GeoPoint(hi, lo))
    return Polygon(rings=(ring,), id=id_, kind=OverlayKind.NPU, name=id_)


class TestGeoPoint:
    def test_validation(self):
        with pytest.raises(ValueError):
            GeoPoint(91, 0)
        with pytest.raises(ValueError):
            GeoPoint(0, -181)
        with pytest.raises(ValueError):
            GeoPoint(float("nan"), 0)


class TestHaversine:
    def test_identity(self):
        p = GeoPoint(33.75, -84.39)
        assert haversine_m(p, p) == 0.0

    def test_one_degree_meridian(self):
        # hand evaluation: R * 1 degree in radians = 111,194.93 m
        d = haversine_m(GeoPoint(0, 0), GeoPoint(1, 0))
        assert d == pytest.approx(111_194.9, abs=0.5)
        assert d == pytest.approx(EARTH_RADIUS_M * math.pi / 180, abs=1e-6)

    def test_symmetry_random_pairs(self):
        import random
        rng = random.Random(4)
        for _ in range(50):
            p = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            q = GeoPoint(rng.uniform(-80, 80), rng.uniform(-179, 179))
            assert haversine_m(p, q) == haversine_m(q, p)
            assert haversine_m(p, q) == pytest.approx(
                haversine_oracle(p.lat, p.lon, q.lat, q.lon), rel=1e-9)


class TestPointInPolygon:
    def test_center_inside(self):
        assert point_in_polygon(GeoPoint(0.5, 0.5), square())

    def test_outside(self):
        assert not point_in_polygon(GeoPoint(2, 2), square())

    def test_boundary_counts_inside(self):
        assert point_in_polygon(GeoPoint(0.0, 0.5), square())
        assert point_in_polygon(GeoPoint(0.0, 0.0), square())

    def test_hole(self):
        outer = (GeoPoint(0, 0), GeoPoint(0, 1), GeoPoint(1, 1), GeoPoint(1, 0))
        hole = (GeoPoint(0.25, 0.25), GeoPoint(0.25, 0.75),
                GeoPoint(0.75, 0.75), GeoPoint(0.75, 0.25))
        poly = Polygon(rings=(outer, hole), id="h", kind=OverlayKind.NPU, name="h")
        assert not point_in_polygon(GeoPoint(0.5, 0.5), poly)   # in the hole
        assert point_in_polygon(GeoPoint(0.1, 0.1), poly)       # in the ring
        assert point_in_polygon(GeoPoint(0.25, 0.5), poly)      # hole edge

    def test_needs_three_vertices(self):
        with pytest.raises(ValueError):
            Polygon(rings=((GeoPoint(0, 0), GeoPoint(1, 1)),),
                    id="x", kind=OverlayKind.NPU, name="x")


class Rec:
    def __init__(self, source_id, point):
        self.source_id = source_id
        self.point = point


class TestWithinRadius:
    def test_empty(self):
        assert within_radius(GeoPoint(0, 0), [], 100.0) == []

    def test_distance_zero_first(self):
        p = GeoPoint(10, 10)
        recs = [Rec("far", GeoPoint(10.001, 10)), Rec("self", p)]
        hits = within_radius(p, recs, 500.0)
        assert [r.source_id for r, _ in hits] == ["self", "far"]
        assert hits[0][1] == 0.0

    def test_grid_cutoff_against_oracle(self):
        # 3x3 grid spaced 100 m: axis neighbors at 100 m, diagonals ~141.4 m.
        # The expected set comes from the oracle's cutoff, not intuition.
        step_deg = 100.0 / (6_371_000.0 * math.pi / 180)
        center = GeoPoint(0, 0)
        recs = []
        for i, dy in enumerate((-1, 0, 1)):
            for j, dx in enumerate((-1, 0, 1)):
                recs.append(Rec(f"r{i}{j}", GeoPoint(dy * step_deg, dx * step_deg)))
        for radius in (150.0, 120.0, 99.0):
            hits = within_radius(center, recs, radius)
            expected = {r.source_id for r in recs
                        if haversine_oracle(0, 0, r.point.lat, r.point.lon) <= radius}
            assert {r.source_id for r, _ in hits} == expected
        # at 120 m the diagonals drop out: center plus the 4 axis neighbors
        hits = within_radius(center, recs, 120.0)
        assert {r.source_id for r, _ in hits} == {"r11", "r01", "r10", "r12", "r21"}

    def test_monotone_in_radius(self):
        import random
        rng = random.Random(0)
        recs = [Rec(f"r{i}", GeoPoint(rng.uniform(-0.01, 0.01),
                                      rng.uniform(-0.01, 0.01)))
                for i in range(30)]
        small = {r.source_id for r, _ in within_radius(GeoPoint(0, 0), recs, 400)}
        large = {r.source_id for r, _ in within_radius(GeoPoint(0, 0), recs, 900)}
        assert small <= large

    def test_bad_radius(self):
        with pytest.raises(ValueError):
            within_radius(GeoPoint(0, 0), [], 0)


class TestGeohash:
    def test_known_cell(self):
        # downtown Atlanta sits in the djgz… family
        assert geohash_encode(33.749, -84.388, 6).startswith("djgz")

    def test_neighbors_contain_self_and_adjacent(self):
        cell = geohash_encode(33.749, -84.388, 6)
        neighbors = geohash_neighbors(cell)
        assert cell in neighbors
        assert len(neighbors) == 9
        # a point 50 m away lands in the cell or one of its neighbors
        step = 50.0 / (6_371_000.0 * math.pi / 180)
        assert geohash_encode(33.749 + step, -84.388, 6) in neighbors


class TestGeoJson:
    def test_round_trip(self, tmp_path):
        polys = [square(0, 1, "a"), square(2, 3, "b")]
        path = tmp_path / "polys.geojson"
        write_polygons(polys, str(path))
        loaded = load_polygons(str(path))
        assert [p.id for p in loaded] == ["a", "b"]
        assert loaded[0].rings == polys[0].rings
        assert loaded[0].kind == OverlayKind.NPU

    def test_missing_properties_rejected(self, tmp_path):
        doc = polygons_to_geojson([square()])
        del doc["features"][0]["properties"]["kind"]
        path = tmp_path / "bad.geojson"
        path.write_text(json.dumps(doc), encoding="utf-8")
        with pytest.raises(ValueError, match="kind"):
            load_polygons(str(path))
