"""HTTP service over an immutable snapshot: GeoJSON property layers,
conjunctive filtering, and per-overlay aggregate statistics.

The snapshot is built offline by the pipeline and loaded atomically; every
response is a pure function of (snapshot, query). Filters on a field a
feature lacks (date, risk score) exclude that feature while the filter is
active.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Optional, Sequence

from fastapi import FastAPI, HTTPException, Request
from fastapi.responses import HTMLResponse, JSONResponse

from .geo import GeoPoint, OverlayKind, Polygon, point_in_polygon


class Layer(str, Enum):
    FIRE = "FIRE"
    CURRENT_INSPECTION = "CURRENT_INSPECTION"
    POTENTIAL_INSPECTION = "POTENTIAL_INSPECTION"


@dataclass(frozen=True)
class SnapshotFeature:
    property_id: str
    layer: Layer
    point: GeoPoint
    business_name: Optional[str] = None
    address: Optional[str] = None
    usage_type: Optional[str] = None
    date: Optional[date] = None
    risk_probability: Optional[float] = None
    risk_score: Optional[int] = None
    risk_category: Optional[str] = None


@dataclass(frozen=True)
class Snapshot:
    build_stamp: str
    features: tuple
    overlays: dict  # kind value -> list[Polygon]

    def counts(self) -> dict:
        out = {layer.value: 0 for layer in Layer}
        for f in self.features:
            out[f.layer.value] += 1
        return out


class QueryError(ValueError):
    pass


class UnknownOverlay(KeyError):
    pass


@dataclass(frozen=True)
class PropertyQuery:
    layer: Optional[Layer] = None
    usage_type: Optional[str] = None
    date_from: Optional[date] = None
    date_to: Optional[date] = None
    risk_min: Optional[int] = None
    risk_max: Optional[int] = None
    bbox: Optional[tuple] = None  # (min_lon, min_lat, max_lon, max_lat)


def _fold_usage(s: str) -> str:
    from .address import fold
    return fold(s)


def filter_properties(snapshot: Snapshot, query: PropertyQuery) -> list[SnapshotFeature]:
    """Conjunctive filter; output order is stable by property id."""
    out = []
    usage = _fold_usage(query.usage_type) if query.usage_type else None
    for f in snapshot.features:
        if query.layer is not None and f.layer != query.layer:
            continue
        if usage is not None and (f.usage_type is None
                                  or _fold_usage(f.usage_type) != usage):
            continue
        if query.date_from is not None and (f.date is None or f.date < query.date_from):
            continue
        if query.date_to is not None and (f.date is None or f.date > query.date_to):
            continue
        if query.risk_min is not None and (f.risk_score is None
                                           or f.risk_score < query.risk_min):
            continue
        if query.risk_max is not None and (f.risk_score is None
                                           or f.risk_score > query.risk_max):
            continue
        if query.bbox is not None:
            min_lon, min_lat, max_lon, max_lat = query.bbox
            if not (min_lon <= f.point.lon <= max_lon
                    and min_lat <= f.point.lat <= max_lat):
                continue
        out.append(f)
    return out


def overlay_stats(snapshot: Snapshot, kind: str, overlay_id: str,
                  query: PropertyQuery) -> dict:
    """Counts and percentages per layer inside one overlay polygon, under
    the given filter. Percentage denominator is the filtered total of that
    layer (0 percent when the layer is empty)."""
    polys = snapshot.overlays.get(kind)
    if polys is None:
        raise UnknownOverlay(kind)
    poly = next((p for p in polys if p.id == overlay_id), None)
    if poly is None:
        raise UnknownOverlay(f"{kind}/{overlay_id}")
    filtered = filter_properties(snapshot, query)
    totals = {layer.value: 0 for layer in Layer}
    counts = {layer.value: 0 for layer in Layer}
    for f in filtered:
        totals[f.layer.value] += 1
        if point_in_polygon(f.point, poly):
            counts[f.layer.value] += 1
    layers = {}
    for layer in Layer:
        total = totals[layer.value]
        count = counts[layer.value]
        layers[layer.value] = {
            "count": count,
            "filteredTotal": total,
            "percentage": (100.0 * count / total) if total else 0.0,
        }
    return {"kind": kind, "id": poly.id, "name": poly.name, "layers": layers}


# --- GeoJSON (de)serialization ------------------------------------------


def feature_to_geojson(f: SnapshotFeature) -> dict:
    props = {
        "layer": f.layer.value,
        "businessName": f.business_name,
        "address": f.address,
        "usageType": f.usage_type,
        "date": f.date.isoformat() if f.date else None,
        "riskScore": f.risk_score,
        "riskCategory": f.risk_category,
        "riskProbability": f.risk_probability,
    }
    return {"type": "Feature", "id": f.property_id,
            "geometry": {"type": "Point",
                         "coordinates": [f.point.lon, f.point.lat]},
            "properties": props}


def features_to_collection(features: Sequence[SnapshotFeature]) -> dict:
    return {"type": "FeatureCollection",
            "features": [feature_to_geojson(f) for f in features]}


def snapshot_to_geojson(snapshot: Snapshot) -> dict:
    from .geo import polygons_to_geojson
    doc = features_to_collection(snapshot.features)
    doc["buildStamp"] = snapshot.build_stamp
    doc["overlays"] = {kind: polygons_to_geojson(polys)
                       for kind, polys in sorted(snapshot.overlays.items())}
    return doc


def build_snapshot(features: Sequence[SnapshotFeature],
                   overlays: dict) -> Snapshot:
    """Freeze features (sorted by property id) and stamp the build.

    The stamp is a digest of the content, so identical inputs produce a
    byte-identical snapshot file.
    """
    ordered = tuple(sorted(features, key=lambda f: f.property_id))
    payload = json.dumps(
        features_to_collection(ordered), sort_keys=True).encode("utf-8")
    stamp = "build-" + hashlib.sha256(payload).hexdigest()[:12]
    return Snapshot(build_stamp=stamp, features=ordered, overlays=dict(overlays))


def write_snapshot(snapshot: Snapshot, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(snapshot_to_geojson(snapshot), fh, sort_keys=True)
        fh.write("\n")


def load_snapshot(path: str) -> Snapshot:
    from .geo import GeoPoint

    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    features = []
    for feat in doc["features"]:
        props = feat["properties"]
        lon, lat = feat["geometry"]["coordinates"]
        features.append(SnapshotFeature(
            property_id=str(feat["id"]),
            layer=Layer(props["layer"]),
            point=GeoPoint(lat=lat, lon=lon),
            business_name=props.get("businessName"),
            address=props.get("address"),
            usage_type=props.get("usageType"),
            date=date.fromisoformat(props["date"]) if props.get("date") else None,
            risk_probability=props.get("riskProbability"),
            risk_score=props.get("riskScore"),
            risk_category=props.get("riskCategory"),
        ))
    overlays = {}
    for kind, collection in doc.get("overlays", {}).items():
        polys = []
        for f in collection["features"]:
            rings = tuple(
                tuple(GeoPoint(lat=pt[1], lon=pt[0]) for pt in ring[:-1])
                for ring in f["geometry"]["coordinates"])
            p = f["properties"]
            polys.append(Polygon(rings=rings, id=str(p["id"]),
                                 kind=OverlayKind(p["kind"]), name=str(p["name"])))
        overlays[kind] = polys
    return Snapshot(build_stamp=doc["buildStamp"],
                    features=tuple(features), overlays=overlays)


# --- HTTP app -------------------------------------------------------------


def parse_query(layer: Optional[str] = None, usage: Optional[str] = None,
                date_from: Optional[str] = None, date_to: Optional[str] = None,
                risk_min: Optional[str] = None, risk_max: Optional[str] = None,
                bbox: Optional[str] = None) -> PropertyQuery:
    """Parse raw query strings; QueryError maps to HTTP 400."""
    def parse_date(name, s):
        try:
            return date.fromisoformat(s)
        except ValueError as err:
            raise QueryError(f"{name}: not an ISO date: {s!r}") from err

    def parse_risk(name, s):
        try:
            val = int(s)
        except ValueError as err:
            raise QueryError(f"{name}: not an integer: {s!r}") from err
        if not (1 <= val <= 10):
            raise QueryError(f"{name}: {val} outside 1..10")
        return val

    q_layer = None
    if layer:
        try:
            q_layer = Layer(layer)
        except ValueError as err:
            raise QueryError(f"unknown layer {layer!r}") from err
    d_from = parse_date("from", date_from) if date_from else None
    d_to = parse_date("to", date_to) if date_to else None
    if d_from and d_to and d_from > d_to:
        raise QueryError("date range is inverted")
    r_min = parse_risk("risk_min", risk_min) if risk_min else None
    r_max = parse_risk("risk_max", risk_max) if risk_max else None
    if r_min and r_max and r_min > r_max:
        raise QueryError("risk range is inverted")
    q_bbox = None
    if bbox:
        parts = bbox.split(",")
        if len(parts) != 4:
            raise QueryError("bbox must be min_lon,min_lat,max_lon,max_lat")
        try:
            q_bbox = tuple(float(p) for p in parts)
        except ValueError as err:
            raise QueryError(f"bbox: bad number in {bbox!r}") from err
        if q_bbox[0] > q_bbox[2] or q_bbox[1] > q_bbox[3]:
            raise QueryError("bbox is inverted")
    return PropertyQuery(layer=q_layer, usage_type=usage or None,
                         date_from=d_from, date_to=d_to,
                         risk_min=r_min, risk_max=r_max, bbox=q_bbox)


def create_app(snapshot_path: str, webroot: Optional[str] = None) -> FastAPI:
    """FastAPI app serving one snapshot. Reload by restarting (atomic swap)."""
    snapshot = load_snapshot(snapshot_path)
    app = FastAPI(title="firerisk", docs_url=None, redoc_url=None)

    def query_from(request: Request) -> PropertyQuery:
        params = request.query_params
        try:
            return parse_query(
                layer=params.get("layer"), usage=params.get("usage"),
                date_from=params.get("from"), date_to=params.get("to"),
                risk_min=params.get("risk_min"), risk_max=params.get("risk_max"),
                bbox=params.get("bbox"))
        except QueryError as err:
            raise HTTPException(status_code=400, detail=str(err)) from err

    @app.get("/api/health")
    def health():
        return {"status": "ok"}

    @app.get("/api/meta")
    def meta():
        return {"buildStamp": snapshot.build_stamp, "counts": snapshot.counts()}

    @app.get("/api/properties")
    def properties(request: Request):
        features = filter_properties(snapshot, query_from(request))
        return JSONResponse(features_to_collection(features))

    @app.get("/api/overlays/{kind}")
    def overlays(kind: str):
        from .geo import polygons_to_geojson
        polys = snapshot.overlays.get(kind)
        if polys is None:
            raise HTTPException(status_code=404, detail=f"unknown overlay kind {kind!r}")
        return JSONResponse(polygons_to_geojson(polys))

    @app.get("/api/overlays/{kind}/{overlay_id}/stats")
    def stats(kind: str, overlay_id: str, request: Request):
        q = query_from(request)
        try:
            return overlay_stats(snapshot, kind, overlay_id, q)
        except UnknownOverlay as err:
            raise HTTPException(status_code=404, detail=str(err)) from err

    if webroot and os.path.isdir(webroot):
        # API routes above win; everything else falls through to the bundle,
        # with index.html served at /.
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=webroot, html=True), name="webmap")
    else:
        @app.get("/", response_class=HTMLResponse)
        def index():
            return HTMLResponse(
                "<html><body><h1>firerisk service</h1>"
                "<p>No web bundle configured; the API lives under /api/.</p>"
                "</body></html>")

    return app
