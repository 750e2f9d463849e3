"""Geographic primitives: points, polygons, distances, geohash blocking keys.

Distances use a spherical earth (R = 6,371,000 m); at the <=100 m join radii
used by the linkage cascade the ellipsoidal error is irrelevant.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Optional, Sequence

EARTH_RADIUS_M = 6_371_000.0


class OverlayKind(str, Enum):
    CITY = "CITY"
    NPU = "NPU"
    COUNCIL_DISTRICT = "COUNCIL_DISTRICT"
    BATTALION = "BATTALION"


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError("coordinates must be finite")
        if not (-90.0 <= self.lat <= 90.0):
            raise ValueError(f"latitude out of range: {self.lat}")
        if not (-180.0 <= self.lon <= 180.0):
            raise ValueError(f"longitude out of range: {self.lon}")


@dataclass(frozen=True)
class Polygon:
    """Outer ring plus optional holes; rings are implicitly closed."""

    rings: tuple[tuple[GeoPoint, ...], ...]
    id: str
    kind: OverlayKind
    name: str

    def __post_init__(self) -> None:
        if not self.rings or any(len(r) < 3 for r in self.rings):
            raise ValueError("every ring needs at least 3 vertices")


def haversine_m(p: GeoPoint, q: GeoPoint) -> float:
    """Great-circle distance in meters."""
    lat1, lon1, lat2, lon2 = map(math.radians, (p.lat, p.lon, q.lat, q.lon))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    a = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


_EDGE_EPS = 1e-12


def _on_segment(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> bool:
    cross = (b.lon - a.lon) * (p.lat - a.lat) - (b.lat - a.lat) * (p.lon - a.lon)
    if abs(cross) > _EDGE_EPS:
        return False
    return (min(a.lon, b.lon) - _EDGE_EPS <= p.lon <= max(a.lon, b.lon) + _EDGE_EPS
            and min(a.lat, b.lat) - _EDGE_EPS <= p.lat <= max(a.lat, b.lat) + _EDGE_EPS)


def _ray_crossings(p: GeoPoint, ring: Sequence[GeoPoint]) -> bool:
    inside = False
    n = len(ring)
    for i in range(n):
        a, b = ring[i], ring[(i + 1) % n]
        if (a.lat > p.lat) != (b.lat > p.lat):
            x = a.lon + (p.lat - a.lat) * (b.lon - a.lon) / (b.lat - a.lat)
            if p.lon < x:
                inside = not inside
    return inside


def point_in_polygon(p: GeoPoint, poly: Polygon) -> bool:
    """Even-odd test over all rings; boundary points count as inside."""
    for ring in poly.rings:
        n = len(ring)
        for i in range(n):
            if _on_segment(p, ring[i], ring[(i + 1) % n]):
                return True
    inside = False
    for ring in poly.rings:
        if _ray_crossings(p, ring):
            inside = not inside
    return inside


def _default_record_id(record) -> str:
    for attr in ("source_id", "property_id", "id"):
        val = getattr(record, attr, None)
        if val is not None:
            return str(val)
    return repr(record)


def within_radius(p: GeoPoint, candidates: Iterable, r: float,
                  rid=_default_record_id) -> list[tuple[object, float]]:
    """All records whose .point lies within r meters, nearest first.

    Ties break by record id ascending. Records without a point are skipped.
    """
    if r <= 0:
        raise ValueError("radius must be positive")
    hits = []
    for rec in candidates:
        pt = getattr(rec, "point", None)
        if pt is None:
            continue
        d = haversine_m(p, pt)
        if d <= r:
            hits.append((rec, d))
    hits.sort(key=lambda t: (t[1], rid(t[0])))
    return hits


# --- geohash -----------------------------------------------------------

_BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"


def geohash_encode(lat: float, lon: float, precision: int = 6) -> str:
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    bits = []
    even = True
    while len(bits) < precision * 5:
        if even:
            mid = (lon_lo + lon_hi) / 2
            if lon >= mid:
                bits.append(1)
                lon_lo = mid
            else:
                bits.append(0)
                lon_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2
            if lat >= mid:
                bits.append(1)
                lat_lo = mid
            else:
                bits.append(0)
                lat_hi = mid
        even = not even
    chars = []
    for i in range(0, len(bits), 5):
        idx = 0
        for b in bits[i:i + 5]:
            idx = (idx << 1) | b
        chars.append(_BASE32[idx])
    return "".join(chars)


def _geohash_cell(cell: str) -> tuple[float, float, float, float]:
    """Center (lat, lon) and half-sizes (dlat, dlon) of a geohash cell."""
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for ch in cell:
        idx = _BASE32.index(ch)
        for shift in range(4, -1, -1):
            bit = (idx >> shift) & 1
            if even:
                mid = (lon_lo + lon_hi) / 2
                if bit:
                    lon_lo = mid
                else:
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2
                if bit:
                    lat_lo = mid
                else:
                    lat_hi = mid
            even = not even
    return ((lat_lo + lat_hi) / 2, (lon_lo + lon_hi) / 2,
            (lat_hi - lat_lo) / 2, (lon_hi - lon_lo) / 2)


def geohash_neighbors(cell: str) -> list[str]:
    """The cell itself plus its (up to) 8 neighbors, deduplicated."""
    lat, lon, dlat, dlon = _geohash_cell(cell)
    out: list[str] = []
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            nlat = min(90.0 - 1e-9, max(-90.0 + 1e-9, lat + dy * 2 * dlat))
            nlon = lon + dx * 2 * dlon
            if nlon > 180.0:
                nlon -= 360.0
            elif nlon < -180.0:
                nlon += 360.0
            h = geohash_encode(nlat, nlon, len(cell))
            if h not in out:
                out.append(h)
    return out


# --- GeoJSON -----------------------------------------------------------


def load_polygons(path: str) -> list[Polygon]:
    """Read Polygon features from a GeoJSON FeatureCollection (RFC 7946).

    Feature properties must carry id, kind, and name.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("type") != "FeatureCollection":
        raise ValueError(f"{path}: not a FeatureCollection")
    out = []
    for feat in doc.get("features", []):
        geom = feat.get("geometry") or {}
        if geom.get("type") != "Polygon":
            raise ValueError(f"{path}: unsupported geometry {geom.get('type')!r}")
        props = feat.get("properties") or {}
        missing = [k for k in ("id", "kind", "name") if k not in props]
        if missing:
            raise ValueError(f"{path}: feature missing properties {missing}")
        rings = tuple(
            tuple(GeoPoint(lat=pt[1], lon=pt[0]) for pt in _drop_closing(ring))
            for ring in geom["coordinates"]
        )
        out.append(Polygon(rings=rings, id=str(props["id"]),
                           kind=OverlayKind(props["kind"]), name=str(props["name"])))
    return out


def _drop_closing(ring: Sequence[Sequence[float]]) -> Sequence[Sequence[float]]:
    if len(ring) > 1 and ring[0] == ring[-1]:
        return ring[:-1]
    return ring


def polygon_to_feature(poly: Polygon) -> dict:
    coords = [[[p.lon, p.lat] for p in ring] + [[ring[0].lon, ring[0].lat]]
              for ring in poly.rings]
    return {
        "type": "Feature",
        "geometry": {"type": "Polygon", "coordinates": coords},
        "properties": {"id": poly.id, "kind": poly.kind.value, "name": poly.name},
    }


def polygons_to_geojson(polys: Iterable[Polygon]) -> dict:
    return {"type": "FeatureCollection",
            "features": [polygon_to_feature(p) for p in polys]}


def write_polygons(polys: Iterable[Polygon], path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(polygons_to_geojson(polys), fh, sort_keys=True, indent=1)
        fh.write("\n")
