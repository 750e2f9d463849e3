"""Pipeline stages behind the CLI: generate, ingest, link, discover, train,
evaluate, score, export. Each stage reads files, writes files plus a
machine-readable run log, and is idempotent given identical inputs and
seed.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from datetime import date
from typing import Optional

import numpy as np

from . import features as feats
from . import linkage, model as models, risk as risks, service, synth
from .address import format_address
from .features import FeatureBuilder, FeatureSchema, TimeWindow, build_labels
from .geo import GeoPoint, OverlayKind, load_polygons, point_in_polygon, write_polygons
from .ingest import (DATASET_SCHEMAS, Dataset, SourceRecord, default_geocoder,
                     read_dataset, write_dataset)
from .linkage import LinkConfig, PropertyRecord
from .synth import (ATLANTA_BBOX, Corruption, Signal, SynthConfig,
                    make_overlays, synth_generate, write_corpus)


class ConfigError(ValueError):
    pass


class PipelineError(RuntimeError):
    pass


PIPELINE_DATASETS = (Dataset.COSTAR, Dataset.PARCEL, Dataset.BUSINESS_LICENSE,
                     Dataset.FIRE_PERMITS, Dataset.FIRE_INCIDENTS)
EVENT_DATASETS = (Dataset.FIRE_INCIDENTS, Dataset.FIRE_PERMITS)
OVERLAY_FILES = {OverlayKind.CITY: "city.geojson",
                 OverlayKind.NPU: "npu.geojson",
                 OverlayKind.BATTALION: "battalion.geojson",
                 OverlayKind.COUNCIL_DISTRICT: "council_district.geojson"}


@dataclass
class PipelineConfig:
    data_dir: str = "data"
    out_dir: str = "out"
    seed: int = 7
    n_properties: int = 800
    n_fires: int = 48
    window_start: date = date(2011, 1, 1)
    window_end: date = date(2015, 1, 1)
    corruption: Corruption = field(default_factory=Corruption)
    signal_weights: dict = field(default_factory=lambda: {
        "floor_size": 1.6, "number_of_units": 1.2})
    signal_bias: Optional[float] = None
    inspected_fraction: float = 0.4
    missing_rate: float = 0.05
    bbox: tuple = ATLANTA_BBOX
    link: LinkConfig = field(default_factory=LinkConfig)
    train_window: TimeWindow = field(default_factory=lambda: TimeWindow(
        date(2011, 1, 1), date(2014, 1, 1)))
    test_window: TimeWindow = field(default_factory=lambda: TimeWindow(
        date(2014, 1, 1), date(2015, 1, 1)))
    forest_grid: dict = field(default_factory=lambda: {
        "max_depth": [10], "n_trees": [50]})
    logistic_grid: dict = field(default_factory=lambda: {"l2": [0.1]})
    cv_folds: int = 10
    fprs: tuple = (0.1, 0.2, 0.3)
    schema_path: Optional[str] = None
    city_boundary: Optional[str] = None
    overlay_paths: dict = field(default_factory=dict)
    discovery_top_k: int = 100
    discovery_exclusions: tuple = ()

    def validate(self) -> None:
        if self.train_window.start < self.test_window.end \
                and self.test_window.start < self.train_window.end:
            raise ConfigError("train and test windows overlap (label leakage)")

    def schema(self) -> FeatureSchema:
        if self.schema_path:
            return FeatureSchema.from_json(self.schema_path)
        return FeatureSchema.default()

    def synth_config(self) -> SynthConfig:
        return SynthConfig(
            seed=self.seed, n_properties=self.n_properties, n_fires=self.n_fires,
            window_start=self.window_start, window_end=self.window_end,
            corruption=self.corruption,
            signal=Signal(weights=dict(self.signal_weights), bias=self.signal_bias),
            bbox=self.bbox, inspected_fraction=self.inspected_fraction,
            missing_rate=self.missing_rate)


def _window_from(doc: dict, name: str) -> TimeWindow:
    try:
        return TimeWindow(date.fromisoformat(doc["start"]),
                          date.fromisoformat(doc["end"]))
    except (KeyError, ValueError) as err:
        raise ConfigError(f"{name}: bad window {doc!r}: {err}") from err


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> PipelineConfig:
    """Config is one JSON document; relative paths resolve against it.

    CLI flags arrive via overrides and win over the file.
    """
    cfg = PipelineConfig()
    base = "."
    if path:
        base = os.path.dirname(os.path.abspath(path))
        try:
            with open(path, encoding="utf-8") as fh:
                doc = json.load(fh)
        except (OSError, json.JSONDecodeError) as err:
            raise ConfigError(f"cannot read config {path}: {err}") from err
        cfg = _config_from_doc(doc, base)
    if overrides:
        for key, val in overrides.items():
            if val is not None:
                setattr(cfg, key, val)
    cfg.validate()
    return cfg


def _resolve(base: str, p: Optional[str]) -> Optional[str]:
    if p is None:
        return None
    return p if os.path.isabs(p) else os.path.join(base, p)


def _config_from_doc(doc: dict, base: str) -> PipelineConfig:
    cfg = PipelineConfig()
    try:
        if "dataDir" in doc:
            cfg.data_dir = _resolve(base, doc["dataDir"])
        if "outDir" in doc:
            cfg.out_dir = _resolve(base, doc["outDir"])
        cfg.seed = int(doc.get("seed", cfg.seed))
        s = doc.get("synth", {})
        cfg.n_properties = int(s.get("nProperties", cfg.n_properties))
        cfg.n_fires = int(s.get("nFires", cfg.n_fires))
        if "windowStart" in s:
            cfg.window_start = date.fromisoformat(s["windowStart"])
        if "windowEnd" in s:
            cfg.window_end = date.fromisoformat(s["windowEnd"])
        c = s.get("corruption", {})
        cfg.corruption = Corruption(
            typo_rate=float(c.get("typoRate", 0.0)),
            abbrev_rate=float(c.get("abbrevRate", 0.0)),
            jitter_meters=float(c.get("jitterMeters", 0.0)))
        sig = s.get("signal", {})
        cfg.signal_weights = dict(sig.get("weights", cfg.signal_weights))
        cfg.signal_bias = sig.get("bias", None)
        cfg.inspected_fraction = float(s.get("inspectedFraction", cfg.inspected_fraction))
        cfg.missing_rate = float(s.get("missingRate", cfg.missing_rate))
        if "bbox" in s:
            cfg.bbox = tuple(s["bbox"])
        lk = doc.get("link", {})
        cfg.link = LinkConfig(
            radius_meters=float(lk.get("radiusMeters", 50.0)),
            name_threshold=float(lk.get("nameThreshold", 0.85)),
            block_precision=int(lk.get("blockPrecision", 6)),
            require_name_with_geo=bool(lk.get("requireNameWithGeo", True)))
        if "trainWindow" in doc:
            cfg.train_window = _window_from(doc["trainWindow"], "trainWindow")
        if "testWindow" in doc:
            cfg.test_window = _window_from(doc["testWindow"], "testWindow")
        if "forestGrid" in doc:
            cfg.forest_grid = {k: list(v) for k, v in doc["forestGrid"].items()}
        if "logisticGrid" in doc:
            cfg.logistic_grid = {k: list(v) for k, v in doc["logisticGrid"].items()}
        cfg.cv_folds = int(doc.get("cvFolds", cfg.cv_folds))
        if "fprs" in doc:
            cfg.fprs = tuple(float(f) for f in doc["fprs"])
        cfg.schema_path = _resolve(base, doc.get("schema"))
        cfg.city_boundary = _resolve(base, doc.get("cityBoundary"))
        cfg.overlay_paths = {k: _resolve(base, v)
                             for k, v in doc.get("overlays", {}).items()}
        disc = doc.get("discovery", {})
        cfg.discovery_top_k = int(disc.get("topK", 100))
        cfg.discovery_exclusions = tuple(disc.get("exclusions", ()))
    except (TypeError, ValueError, KeyError) as err:
        if isinstance(err, ConfigError):
            raise
        raise ConfigError(f"bad config value: {err}") from err
    return cfg


# --- run logs -------------------------------------------------------------


def _sha256(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _config_digest(cfg: PipelineConfig) -> str:
    doc = {k: repr(v) for k, v in sorted(asdict(cfg).items())}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def _write_runlog(cfg: PipelineConfig, stage: str, inputs: list[str],
                  outputs: list[str], counts: dict) -> None:
    log_dir = os.path.join(cfg.out_dir, "logs")
    os.makedirs(log_dir, exist_ok=True)
    doc = {
        "stage": stage,
        "seed": cfg.seed,
        "configDigest": _config_digest(cfg),
        "inputs": {os.path.basename(p): _sha256(p) for p in sorted(inputs)},
        "outputs": {os.path.basename(p): _sha256(p) for p in sorted(outputs)},
        "counts": counts,
    }
    with open(os.path.join(log_dir, f"{stage}.json"), "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")


def _dump_json(doc, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")


# --- stages ----------------------------------------------------------------


def stage_synth(cfg: PipelineConfig) -> dict:
    os.makedirs(cfg.data_dir, exist_ok=True)
    result = synth_generate(cfg.synth_config())
    paths = write_corpus(result, cfg.data_dir)
    overlays = make_overlays(cfg.bbox)
    for kind, polys in overlays.items():
        path = os.path.join(cfg.data_dir, OVERLAY_FILES[kind])
        write_polygons(polys, path)
        paths[OVERLAY_FILES[kind]] = path
    counts = {ds.value: len(recs) for ds, recs in result.records.items()}
    counts["groundTruthLinks"] = len(result.ground_truth_links)
    counts["groundTruthFires"] = len(result.ground_truth_fires)
    _write_runlog(cfg, "synth", [], sorted(paths.values()), counts)
    return counts


def _dataset_path(cfg: PipelineConfig, ds: Dataset, ingested: bool = False) -> str:
    root = os.path.join(cfg.out_dir, "ingested") if ingested else cfg.data_dir
    return os.path.join(root, f"{ds.value.lower()}.csv")


def _city_polygon(cfg: PipelineConfig):
    path = cfg.city_boundary or os.path.join(cfg.data_dir, "city.geojson")
    if not os.path.exists(path):
        return None, None
    polys = load_polygons(path)
    return (polys[0] if polys else None), path


def city_filter(records: list[SourceRecord], polygon) -> tuple[list, list]:
    """Split records into (inside, outside); pointless records stay inside."""
    kept, dropped = [], []
    for rec in records:
        if rec.point is not None and not point_in_polygon(rec.point, polygon):
            dropped.append(rec)
        else:
            kept.append(rec)
    return kept, dropped


def stage_ingest(cfg: PipelineConfig) -> dict:
    out_root = os.path.join(cfg.out_dir, "ingested")
    os.makedirs(out_root, exist_ok=True)
    geocoder = default_geocoder(cfg.bbox)  # live when GEOCODER_URL is set
    boundary, boundary_path = _city_polygon(cfg)
    inputs, outputs = [], []
    counts: dict = {}
    reject_rows = []
    for ds in PIPELINE_DATASETS:
        src = _dataset_path(cfg, ds)
        inputs.append(src)
        records, rejects = read_dataset(src, ds)
        geocoded = 0
        for rec in records:
            if rec.point is None and rec.address is not None:
                rec.point = geocoder.geocode(rec.address).point
                rec.attributes["geocoded"] = 1.0
                geocoded += 1
        outside = 0
        if boundary is not None:
            records, dropped = city_filter(records, boundary)
            outside = len(dropped)
        dst = _dataset_path(cfg, ds, ingested=True)
        write_dataset(dst, records, DATASET_SCHEMAS[ds])
        outputs.append(dst)
        counts[ds.value] = {"rows": len(records), "rejects": len(rejects),
                            "geocoded": geocoded, "outsideCity": outside}
        reject_rows += [(ds.value, r.row_number, r.reason) for r in rejects]
    rejects_path = os.path.join(cfg.out_dir, "rejects.csv")
    import csv
    with open(rejects_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["dataset", "rowNumber", "reason"])
        writer.writerows(sorted(reject_rows))
    outputs.append(rejects_path)
    if boundary_path:
        inputs.append(boundary_path)
    _write_runlog(cfg, "ingest", inputs, outputs, counts)
    return counts


def _read_ingested(cfg: PipelineConfig) -> dict[Dataset, list[SourceRecord]]:
    out = {}
    for ds in PIPELINE_DATASETS:
        path = _dataset_path(cfg, ds, ingested=True)
        if not os.path.exists(path):
            raise PipelineError(f"missing {path}; run ingest first")
        records, rejects = read_dataset(path, ds)
        if rejects:
            raise PipelineError(f"{path}: {len(rejects)} rejects in ingested data")
        out[ds] = records
    return out


def _address_doc(addr) -> Optional[dict]:
    if addr is None:
        return None
    return {"raw": addr.raw, "streetNumber": addr.street_number,
            "streetName": addr.street_name, "streetSuffix": addr.street_suffix,
            "preDirectional": addr.pre_directional,
            "postDirectional": addr.post_directional, "unit": addr.unit,
            "city": addr.city, "state": addr.state, "zip5": addr.zip5}


def _address_from_doc(doc):
    if doc is None:
        return None
    from .address import PostalAddress
    return PostalAddress(raw=doc["raw"], street_number=doc["streetNumber"],
                         street_name=doc["streetName"],
                         street_suffix=doc["streetSuffix"],
                         pre_directional=doc["preDirectional"],
                         post_directional=doc["postDirectional"],
                         unit=doc["unit"], city=doc["city"], state=doc["state"],
                         zip5=doc["zip5"])


def _property_doc(p: PropertyRecord) -> dict:
    return {"propertyId": p.property_id,
            "address": _address_doc(p.canonical_address),
            "point": [p.point.lat, p.point.lon] if p.point else None,
            "parcelId": p.parcel_id, "businessName": p.business_name,
            "usageType": p.usage_type, "attributes": p.attributes,
            "provenance": [[ds.value, sid] for ds, sid in p.provenance]}


def _property_from_doc(doc: dict) -> PropertyRecord:
    return PropertyRecord(
        property_id=doc["propertyId"],
        canonical_address=_address_from_doc(doc["address"]),
        point=GeoPoint(*doc["point"]) if doc["point"] else None,
        parcel_id=doc["parcelId"], business_name=doc["businessName"],
        usage_type=doc["usageType"], attributes=doc["attributes"],
        provenance=[(Dataset(ds), sid) for ds, sid in doc["provenance"]])


def load_properties(cfg: PipelineConfig) -> list[PropertyRecord]:
    path = os.path.join(cfg.out_dir, "properties.json")
    if not os.path.exists(path):
        raise PipelineError(f"missing {path}; run link first")
    with open(path, encoding="utf-8") as fh:
        return [_property_from_doc(d) for d in json.load(fh)]


def load_events(cfg: PipelineConfig) -> dict[str, list[dict]]:
    path = os.path.join(cfg.out_dir, "events.json")
    if not os.path.exists(path):
        raise PipelineError(f"missing {path}; run link first")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def fires_from_events(events: dict) -> list[tuple[str, date]]:
    out = []
    for pid, entries in events.items():
        if not pid:
            continue
        for e in entries:
            if e["dataset"] == Dataset.FIRE_INCIDENTS.value and e.get("date"):
                out.append((pid, date.fromisoformat(e["date"])))
    return out


def stage_link(cfg: PipelineConfig) -> dict:
    records = _read_ingested(cfg)
    property_records = {ds: records[ds] for ds in
                        (Dataset.COSTAR, Dataset.PARCEL, Dataset.BUSINESS_LICENSE)}
    properties, links = linkage.cluster_and_fuse(property_records, cfg.link)

    events = {}
    for ds in EVENT_DATASETS:
        # Incident/permit rows carry no business name, so the geo tier would
        # never fire for them; their coordinates are authoritative.
        event_cfg = dataclasses.replace(cfg.link, require_name_with_geo=False)
        attached = linkage.attach_events(properties, records[ds], event_cfg)
        for pid, evs in attached.items():
            rows = events.setdefault(pid, [])
            for e in evs:
                rows.append({"dataset": e.dataset.value, "sourceId": e.source_id,
                             "date": e.event_date.isoformat() if e.event_date else None,
                             "usageType": e.usage_type,
                             "point": [e.point.lat, e.point.lon] if e.point else None})
    for rows in events.values():
        rows.sort(key=lambda e: (e["dataset"], e["sourceId"]))

    links_path = os.path.join(cfg.out_dir, "links.csv")
    linkage.export_links(links_path, links)
    props_path = os.path.join(cfg.out_dir, "properties.json")
    _dump_json([_property_doc(p) for p in properties], props_path)
    events_path = os.path.join(cfg.out_dir, "events.json")
    _dump_json(events, events_path)

    counts = {"properties": len(properties), "links": len(links),
              "unattachedEvents": len(events.get("", []))}
    inputs = [_dataset_path(cfg, ds, ingested=True) for ds in PIPELINE_DATASETS]
    _write_runlog(cfg, "link", inputs, [links_path, props_path, events_path], counts)
    return counts


def stage_discover(cfg: PipelineConfig) -> dict:
    from . import discovery

    properties = load_properties(cfg)
    events = load_events(cfg)
    permit_ids = {pid for pid, evs in events.items()
                  if pid and any(e["dataset"] == Dataset.FIRE_PERMITS.value for e in evs)}
    current = [p for p in properties if p.property_id in permit_ids]
    # Permit usage types define both the criteria and the frequency ranking.
    permit_usages = [type("U", (), {"usage_type": e["usageType"]})
                     for pid in permit_ids for e in events[pid]
                     if e["dataset"] == Dataset.FIRE_PERMITS.value and e["usageType"]]
    criteria = {u.usage_type for u in permit_usages}
    result = discovery.discover_properties(
        properties, current, criteria, cfg.link,
        top_k=cfg.discovery_top_k, exclusions=cfg.discovery_exclusions)

    outputs = []
    for name, plist in (("long_list", result.long_list),
                        ("short_list", result.short_list)):
        csv_path = os.path.join(cfg.out_dir, f"{name}.csv")
        _write_property_csv(plist, csv_path)
        geo_path = os.path.join(cfg.out_dir, f"{name}.geojson")
        _write_property_geojson(plist, geo_path)
        outputs += [csv_path, geo_path]

    stats_path = os.path.join(cfg.out_dir, "usage_stats.csv")
    import csv
    with open(stats_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["usageType", "inspectedCount", "cityWideCount"])
        for s in result.stats:
            writer.writerow([s.usage_type, s.inspected_count, s.city_wide_count])
    outputs.append(stats_path)

    counts = {"currentInspections": len(current), "longList": len(result.long_list),
              "shortList": len(result.short_list), "criteria": len(criteria)}
    inputs = [os.path.join(cfg.out_dir, "properties.json"),
              os.path.join(cfg.out_dir, "events.json")]
    _write_runlog(cfg, "discover", inputs, outputs, counts)
    return counts


def _write_property_csv(plist, path: str) -> None:
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["propertyId", "businessName", "usageType", "address",
                         "lat", "lon", "parcelId", "provenance"])
        for p in sorted(plist, key=lambda p: p.property_id):
            writer.writerow([
                p.property_id, p.business_name or "", p.usage_type or "",
                format_address(p.canonical_address) if p.canonical_address else "",
                repr(p.point.lat) if p.point else "",
                repr(p.point.lon) if p.point else "",
                p.parcel_id or "",
                ";".join(f"{ds.value}:{sid}" for ds, sid in p.provenance)])


def _write_property_geojson(plist, path: str) -> None:
    features = []
    for p in sorted(plist, key=lambda p: p.property_id):
        if p.point is None:
            continue
        features.append({
            "type": "Feature", "id": p.property_id,
            "geometry": {"type": "Point", "coordinates": [p.point.lon, p.point.lat]},
            "properties": {
                "businessName": p.business_name, "usageType": p.usage_type,
                "address": format_address(p.canonical_address)
                if p.canonical_address else None,
                "provenance": [f"{ds.value}:{sid}" for ds, sid in p.provenance]}})
    _dump_json({"type": "FeatureCollection", "features": features}, path)


def _build_matrix(cfg: PipelineConfig, properties, categories=None):
    schema = cfg.schema()
    builder = FeatureBuilder(schema)
    if categories is None:
        builder.fit(properties)
    else:
        builder.categories_ = {k: tuple(v) for k, v in categories.items()}
    return builder, builder.transform(properties)


def stage_train(cfg: PipelineConfig) -> dict:
    properties = load_properties(cfg)
    fires = fires_from_events(load_events(cfg))
    builder, matrix = _build_matrix(cfg, properties)
    y_train = build_labels(fires, matrix.property_ids, cfg.train_window)
    if y_train.sum() == 0 or y_train.sum() == len(y_train):
        raise PipelineError("training labels are degenerate; widen the train window")

    def forest_trainer(X, y, **params):
        return models.train_forest(X, y, models.ForestConfig(seed=cfg.seed, **params),
                                   matrix.column_names)

    def logistic_trainer(X, y, **params):
        return models.train_logistic(X, y, iters=300, rate=0.1,
                                     column_names=matrix.column_names, **params)

    f_search = models.grid_search_cv(matrix.values, y_train, forest_trainer,
                                     cfg.forest_grid, k=cfg.cv_folds, seed=cfg.seed)
    forest = forest_trainer(matrix.values, y_train, **f_search.best_params)
    l_search = models.grid_search_cv(matrix.values, y_train, logistic_trainer,
                                     cfg.logistic_grid, k=cfg.cv_folds, seed=cfg.seed)
    logistic = logistic_trainer(matrix.values, y_train, **l_search.best_params)

    forest_path = os.path.join(cfg.out_dir, "model_forest.json")
    models.save_model(forest, forest_path)
    logistic_path = os.path.join(cfg.out_dir, "model_logistic.json")
    models.save_model(logistic, logistic_path)
    meta_path = os.path.join(cfg.out_dir, "feature_meta.json")
    _dump_json({
        "schema": cfg.schema().to_dict(),
        "categories": {k: list(v) for k, v in sorted(builder.categories_.items())},
        "trainWindow": [cfg.train_window.start.isoformat(),
                        cfg.train_window.end.isoformat()],
        "bestForestParams": f_search.best_params,
        "bestForestCv": f_search.best_score,
        "forestCells": [[p, s] for p, s in f_search.cells],
        "bestLogisticParams": l_search.best_params,
        "bestLogisticCv": l_search.best_score,
        "logisticCells": [[p, s] for p, s in l_search.cells],
    }, meta_path)

    counts = {"rows": len(matrix.property_ids), "columns": len(matrix.column_names),
              "positives": int(y_train.sum())}
    inputs = [os.path.join(cfg.out_dir, "properties.json"),
              os.path.join(cfg.out_dir, "events.json")]
    _write_runlog(cfg, "train", inputs, [forest_path, logistic_path, meta_path], counts)
    return counts


def _load_meta(cfg: PipelineConfig) -> dict:
    path = os.path.join(cfg.out_dir, "feature_meta.json")
    if not os.path.exists(path):
        raise PipelineError(f"missing {path}; run train first")
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _report_doc(report: models.EvalReport, top: int = 25) -> dict:
    return {"auc": report.auc,
            "tprAtFpr": {repr(k): v for k, v in sorted(report.tpr_at_fpr.items())},
            "importances": [[n, w] for n, w in report.importances[:top]],
            "roc": {"fpr": report.roc.fpr.tolist(),
                    "tpr": report.roc.tpr.tolist()} if report.roc else None}


def stage_evaluate(cfg: PipelineConfig) -> dict:
    properties = load_properties(cfg)
    fires = fires_from_events(load_events(cfg))
    meta = _load_meta(cfg)
    _, matrix = _build_matrix(cfg, properties, categories=meta["categories"])
    forest = models.load_model(os.path.join(cfg.out_dir, "model_forest.json"))
    logistic = models.load_model(os.path.join(cfg.out_dir, "model_logistic.json"))

    y_train = build_labels(fires, matrix.property_ids, cfg.train_window)
    y_test = build_labels(fires, matrix.property_ids, cfg.test_window)
    doc = {"trainWindow": [cfg.train_window.start.isoformat(),
                           cfg.train_window.end.isoformat()],
           "testWindow": [cfg.test_window.start.isoformat(),
                          cfg.test_window.end.isoformat()],
           "gridSearch": {"forest": meta["bestForestParams"],
                          "forestCells": meta["forestCells"],
                          "logistic": meta["bestLogisticParams"],
                          "logisticCells": meta["logisticCells"]},
           "models": {}}
    for name, mdl in (("forest", forest), ("logistic", logistic)):
        scores = models.predict_proba(mdl, matrix.values)
        importances = (models.feature_importance(mdl)
                       if isinstance(mdl, models.RandomForestModel)
                       else [(n, float(abs(w))) for n, w in
                             sorted(zip(mdl.column_names, mdl.weights),
                                    key=lambda t: (-abs(t[1]), t[0]))])
        test_report = models.evaluate_scores(scores, y_test, cfg.fprs, importances)
        train_report = models.evaluate_scores(scores, y_train, cfg.fprs, [])
        doc["models"][name] = {"test": _report_doc(test_report),
                               "trainAuc": train_report.auc}

    report_path = os.path.join(cfg.out_dir, "eval_report.json")
    _dump_json(doc, report_path)
    csv_path = os.path.join(cfg.out_dir, "eval_report.csv")
    import csv
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "metric", "value"])
        for name in ("forest", "logistic"):
            writer.writerow([name, "test_auc", repr(doc["models"][name]["test"]["auc"])])
            for fpr, tpr in doc["models"][name]["test"]["tprAtFpr"].items():
                writer.writerow([name, f"tpr_at_fpr_{fpr}", repr(tpr)])
    counts = {"testPositives": int(y_test.sum()),
              "forestTestAuc": doc["models"]["forest"]["test"]["auc"]}
    _write_runlog(cfg, "evaluate", [os.path.join(cfg.out_dir, "feature_meta.json")],
                  [report_path, csv_path], counts)
    return counts


def stage_score(cfg: PipelineConfig) -> dict:
    properties = load_properties(cfg)
    events = load_events(cfg)
    meta = _load_meta(cfg)
    _, matrix = _build_matrix(cfg, properties, categories=meta["categories"])
    forest = models.load_model(os.path.join(cfg.out_dir, "model_forest.json"))
    probs = models.predict_proba(forest, matrix.values)
    scores = [risks.make_risk_score(pid, float(p))
              for pid, p in zip(matrix.property_ids, probs)]

    permit_ids = {pid for pid, evs in events.items()
                  if pid and any(e["dataset"] == Dataset.FIRE_PERMITS.value for e in evs)}
    short_ids = _ids_from_csv(os.path.join(cfg.out_dir, "short_list.csv"))
    by_id = {p.property_id: p for p in properties}
    inspection = [by_id[pid] for pid in sorted(permit_ids | short_ids) if pid in by_id]

    annotated, unmatched = risks.assign_scores(scores, properties, inspection, cfg.link)

    scores_path = os.path.join(cfg.out_dir, "scores.csv")
    risks.scores_to_csv(scores, scores_path)
    assigned_path = os.path.join(cfg.out_dir, "assigned.csv")
    import csv
    with open(assigned_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["propertyId", "layer", "probability", "score", "category"])
        for sp in sorted(annotated, key=lambda sp: sp.record.property_id):
            layer = "CURRENT_INSPECTION" if sp.record.property_id in permit_ids \
                else "POTENTIAL_INSPECTION"
            if sp.risk is None:
                writer.writerow([sp.record.property_id, layer, "", "", ""])
            else:
                writer.writerow([sp.record.property_id, layer,
                                 repr(sp.risk.probability), sp.risk.score,
                                 sp.risk.category.value])
    unmatched_path = os.path.join(cfg.out_dir, "unmatched.csv")
    with open(unmatched_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["propertyId", "reason"])
        writer.writerows(sorted(unmatched))

    counts = {"scored": len(scores), "inspectionList": len(inspection),
              "assigned": sum(1 for sp in annotated if sp.risk is not None),
              "unmatched": len(unmatched)}
    _write_runlog(cfg, "score",
                  [os.path.join(cfg.out_dir, "model_forest.json")],
                  [scores_path, assigned_path, unmatched_path], counts)
    return counts


def _ids_from_csv(path: str) -> set[str]:
    import csv
    if not os.path.exists(path):
        raise PipelineError(f"missing {path}; run discover first")
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["propertyId"] for row in csv.DictReader(fh)}


def stage_export(cfg: PipelineConfig) -> dict:
    properties = load_properties(cfg)
    events = load_events(cfg)
    by_id = {p.property_id: p for p in properties}
    scores = _scores_from_csv(os.path.join(cfg.out_dir, "scores.csv"))
    short_ids = _ids_from_csv(os.path.join(cfg.out_dir, "short_list.csv"))

    features = []
    permit_ids = set()
    for pid, evs in events.items():
        if not pid or pid not in by_id:
            continue
        prop = by_id[pid]
        risk = scores.get(pid)
        for e in evs:
            if e["dataset"] == Dataset.FIRE_INCIDENTS.value and e.get("date"):
                pt = GeoPoint(*e["point"]) if e.get("point") else prop.point
                if pt is None:
                    continue
                features.append(service.SnapshotFeature(
                    property_id=f"fire:{e['sourceId']}",
                    layer=service.Layer.FIRE, point=pt,
                    business_name=prop.business_name,
                    address=format_address(prop.canonical_address)
                    if prop.canonical_address else None,
                    usage_type=prop.usage_type,
                    date=date.fromisoformat(e["date"]),
                    risk_probability=risk.probability if risk else None,
                    risk_score=risk.score if risk else None,
                    risk_category=risk.category.value if risk else None))
            elif e["dataset"] == Dataset.FIRE_PERMITS.value:
                permit_ids.add(pid)

    def property_feature(prop, layer, when):
        risk = scores.get(prop.property_id)
        return service.SnapshotFeature(
            property_id=prop.property_id, layer=layer, point=prop.point,
            business_name=prop.business_name,
            address=format_address(prop.canonical_address)
            if prop.canonical_address else None,
            usage_type=prop.usage_type, date=when,
            risk_probability=risk.probability if risk else None,
            risk_score=risk.score if risk else None,
            risk_category=risk.category.value if risk else None)

    for pid in sorted(permit_ids):
        prop = by_id[pid]
        if prop.point is None:
            continue
        permit_dates = [date.fromisoformat(e["date"]) for e in events[pid]
                        if e["dataset"] == Dataset.FIRE_PERMITS.value and e.get("date")]
        features.append(property_feature(prop, service.Layer.CURRENT_INSPECTION,
                                         max(permit_dates) if permit_dates else None))
    for pid in sorted(short_ids - permit_ids):
        prop = by_id.get(pid)
        if prop is None or prop.point is None:
            continue
        features.append(property_feature(prop, service.Layer.POTENTIAL_INSPECTION, None))

    overlays = {}
    for kind, fname in OVERLAY_FILES.items():
        path = cfg.overlay_paths.get(kind.value.lower()) \
            or os.path.join(cfg.data_dir, fname)
        if os.path.exists(path):
            overlays[kind.value.lower()] = load_polygons(path)

    snapshot = service.build_snapshot(features, overlays)
    snap_path = os.path.join(cfg.out_dir, "snapshot.geojson")
    service.write_snapshot(snapshot, snap_path)

    counts = snapshot.counts()
    counts["overlayKinds"] = sorted(overlays.keys())
    _write_runlog(cfg, "export-geojson",
                  [os.path.join(cfg.out_dir, "properties.json")],
                  [snap_path], counts)
    return counts


def _scores_from_csv(path: str) -> dict[str, risks.RiskScore]:
    import csv
    if not os.path.exists(path):
        raise PipelineError(f"missing {path}; run score first")
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out[row["propertyId"]] = risks.RiskScore(
                property_id=row["propertyId"],
                probability=float(row["probability"]),
                score=int(row["score"]),
                category=risks.RiskCategory(row["category"]))
    return out


ALL_STAGES = ("synth", "ingest", "link", "discover", "train", "evaluate",
              "score", "export-geojson")

STAGE_FUNCS = {
    "synth": stage_synth,
    "ingest": stage_ingest,
    "link": stage_link,
    "discover": stage_discover,
    "train": stage_train,
    "evaluate": stage_evaluate,
    "score": stage_score,
    "export-geojson": stage_export,
}


def run_stage(cfg: PipelineConfig, stage: str) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return STAGE_FUNCS[stage](cfg)
