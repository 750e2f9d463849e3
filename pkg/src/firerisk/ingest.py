"""Source dataset ingestion: CSV readers/writers, schemas, geocoding.

Every row becomes a SourceRecord or lands in a rejects report with a
reason; nothing is dropped silently. The loss between raw rows and usable
records is a first-class output of the pipeline.
"""
from __future__ import annotations

import csv
import hashlib
import json
import os
import threading
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Optional

from .address import (EmptyAddress, NoStreetNumber, NormalizationConfig,
                      PostalAddress, format_address, normalize_address)
from .geo import GeoPoint


class Dataset(str, Enum):
    FIRE_INCIDENTS = "FIRE_INCIDENTS"
    FIRE_PERMITS = "FIRE_PERMITS"
    PARCEL = "PARCEL"
    SCI = "SCI"
    BUSINESS_LICENSE = "BUSINESS_LICENSE"
    CRIME = "CRIME"
    LIQUOR_LICENSE = "LIQUOR_LICENSE"
    COSTAR = "COSTAR"
    PLACES = "PLACES"
    DEMOGRAPHIC = "DEMOGRAPHIC"
    SOCIOECONOMIC = "SOCIOECONOMIC"
    CO = "CO"


@dataclass
class SourceRecord:
    """One row from one dataset, with location fields parsed."""

    source_id: str
    dataset: Dataset
    parcel_id: Optional[str] = None
    address: Optional[PostalAddress] = None
    point: Optional[GeoPoint] = None
    business_name: Optional[str] = None
    usage_type: Optional[str] = None
    event_date: Optional[date] = None
    attributes: dict = field(default_factory=dict)

    def has_location(self) -> bool:
        return self.parcel_id is not None or self.address is not None or self.point is not None


@dataclass(frozen=True)
class RejectedRow:
    row_number: int
    reason: str
    raw: dict


class IngestError(ValueError):
    pass


class SchemaMismatch(IngestError):
    pass


# Reject reasons
NO_LOCATION = "NO_LOCATION"
BAD_COORD = "BAD_COORD"
BAD_DATE = "BAD_DATE"
MISSING_EVENT_DATE = "MISSING_EVENT_DATE"


@dataclass(frozen=True)
class AttrColumn:
    name: str
    kind: str = "numeric"  # "numeric" | "text"


@dataclass(frozen=True)
class DatasetSchema:
    dataset: Dataset
    has_parcel_id: bool = False
    has_address: bool = False
    has_point: bool = False
    has_business_name: bool = False
    has_usage_type: bool = False
    has_event_date: bool = False
    attr_columns: tuple[AttrColumn, ...] = ()

    def header(self) -> list[str]:
        cols = ["source_id"]
        if self.has_parcel_id:
            cols.append("parcel_id")
        if self.has_address:
            cols.append("address")
        if self.has_point:
            cols += ["lat", "lon"]
        if self.has_business_name:
            cols.append("business_name")
        if self.has_usage_type:
            cols.append("usage_type")
        if self.has_event_date:
            cols.append("event_date")
        cols += [c.name for c in self.attr_columns]
        return cols


COSTAR_ATTRS = (
    AttrColumn("floor_size"), AttrColumn("land_area"), AttrColumn("number_of_units"),
    AttrColumn("appraised_value"), AttrColumn("number_of_buildings"),
    AttrColumn("total_taxes"), AttrColumn("lot_size"), AttrColumn("living_units"),
    AttrColumn("percent_leased"), AttrColumn("year_built"),
    AttrColumn("property_type", "text"), AttrColumn("neighborhood", "text"),
)

DATASET_SCHEMAS: dict[Dataset, DatasetSchema] = {
    Dataset.COSTAR: DatasetSchema(
        Dataset.COSTAR, has_parcel_id=True, has_address=True, has_point=True,
        has_business_name=True, has_usage_type=True, attr_columns=COSTAR_ATTRS),
    Dataset.PARCEL: DatasetSchema(
        Dataset.PARCEL, has_parcel_id=True, has_address=True, has_point=True,
        has_business_name=True,  # owner name in county parcel rolls
        attr_columns=(AttrColumn("land_area"), AttrColumn("appraised_value"),
                      AttrColumn("total_taxes"), AttrColumn("lot_size"))),
    Dataset.BUSINESS_LICENSE: DatasetSchema(
        Dataset.BUSINESS_LICENSE, has_address=True, has_point=True,
        has_business_name=True, has_usage_type=True,
        attr_columns=(AttrColumn("license_year"),)),
    Dataset.FIRE_PERMITS: DatasetSchema(
        Dataset.FIRE_PERMITS, has_address=True, has_point=True,
        has_business_name=True, has_usage_type=True, has_event_date=True),
    Dataset.FIRE_INCIDENTS: DatasetSchema(
        Dataset.FIRE_INCIDENTS, has_address=True, has_point=True, has_event_date=True),
    Dataset.LIQUOR_LICENSE: DatasetSchema(
        Dataset.LIQUOR_LICENSE, has_address=True, has_point=True,
        has_business_name=True, attr_columns=(AttrColumn("license_year"),)),
    Dataset.CRIME: DatasetSchema(
        Dataset.CRIME, has_point=True, has_event_date=True,
        attr_columns=(AttrColumn("offense", "text"),)),
    Dataset.PLACES: DatasetSchema(
        Dataset.PLACES, has_address=True, has_point=True,
        has_business_name=True, has_usage_type=True),
    Dataset.SCI: DatasetSchema(
        Dataset.SCI, has_parcel_id=True, has_point=True,
        attr_columns=(AttrColumn("condition_score"),)),
    Dataset.DEMOGRAPHIC: DatasetSchema(
        Dataset.DEMOGRAPHIC, has_point=True,
        attr_columns=(AttrColumn("households"), AttrColumn("population"))),
    Dataset.SOCIOECONOMIC: DatasetSchema(
        Dataset.SOCIOECONOMIC, has_point=True,
        attr_columns=(AttrColumn("median_income"),)),
    Dataset.CO: DatasetSchema(
        Dataset.CO, has_parcel_id=True, has_address=True, has_point=True,
        has_event_date=True),
}


def read_dataset(path: str, dataset: Dataset,
                 schema: Optional[DatasetSchema] = None,
                 norm_cfg: Optional[NormalizationConfig] = None,
                 ) -> tuple[list[SourceRecord], list[RejectedRow]]:
    """Parse one dataset CSV into records plus a rejects report.

    Rows that violate SourceRecord invariants (no location at all, bad
    coordinates or dates, missing event date on fires/permits) are rejected
    with a reason.
    """
    schema = schema or DATASET_SCHEMAS[dataset]
    norm_cfg = norm_cfg or NormalizationConfig.default()
    records: list[SourceRecord] = []
    rejects: list[RejectedRow] = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = schema.header()
        if reader.fieldnames != expected:
            raise SchemaMismatch(
                f"{path}: header {reader.fieldnames} != expected {expected}")
        for row_number, row in enumerate(reader, start=2):
            rec, reason = _row_to_record(row, dataset, schema, norm_cfg)
            if reason is not None:
                rejects.append(RejectedRow(row_number, reason, dict(row)))
            else:
                records.append(rec)
    return records, rejects


def _row_to_record(row: dict, dataset: Dataset, schema: DatasetSchema,
                   norm_cfg: NormalizationConfig):
    def get(col: str) -> Optional[str]:
        val = row.get(col)
        if val is None or val == "":
            return None
        return val

    parcel_id = get("parcel_id") if schema.has_parcel_id else None

    address = None
    if schema.has_address:
        raw_addr = get("address")
        if raw_addr:
            try:
                address = normalize_address(raw_addr, norm_cfg)
            except (EmptyAddress, NoStreetNumber):
                address = None  # record falls back to geocode-only matching

    point = None
    if schema.has_point:
        lat_s, lon_s = get("lat"), get("lon")
        if (lat_s is None) != (lon_s is None):
            return None, BAD_COORD
        if lat_s is not None:
            try:
                point = GeoPoint(lat=float(lat_s), lon=float(lon_s))
            except ValueError:
                return None, BAD_COORD

    event_date = None
    if schema.has_event_date:
        date_s = get("event_date")
        if date_s is None:
            if dataset in (Dataset.FIRE_INCIDENTS, Dataset.FIRE_PERMITS):
                return None, MISSING_EVENT_DATE
        else:
            try:
                event_date = date.fromisoformat(date_s)
            except ValueError:
                return None, BAD_DATE

    attrs: dict = {}
    for col in schema.attr_columns:
        val = get(col.name)
        if val is None:
            continue
        if col.kind == "numeric":
            try:
                attrs[col.name] = float(val)
            except ValueError:
                continue  # unparseable numerics count as missing
        else:
            attrs[col.name] = val

    rec = SourceRecord(
        source_id=row["source_id"],
        dataset=dataset,
        parcel_id=parcel_id,
        address=address,
        point=point,
        business_name=get("business_name") if schema.has_business_name else None,
        usage_type=get("usage_type") if schema.has_usage_type else None,
        event_date=event_date,
        attributes=attrs,
    )
    if not rec.has_location():
        return None, NO_LOCATION
    return rec, None


def write_dataset(path: str, records: list[SourceRecord],
                  schema: Optional[DatasetSchema] = None) -> None:
    """Inverse of read_dataset: records written here parse back field-for-field."""
    if not records and schema is None:
        raise IngestError("schema required to write an empty dataset")
    schema = schema or DATASET_SCHEMAS[records[0].dataset]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(schema.header())
        for rec in records:
            row = [rec.source_id]
            if schema.has_parcel_id:
                row.append(rec.parcel_id or "")
            if schema.has_address:
                # The original raw string: re-parsing reproduces the record
                # exactly, including PostalAddress.raw.
                row.append(rec.address.raw if rec.address else "")
            if schema.has_point:
                if rec.point is not None:
                    row += [repr(rec.point.lat), repr(rec.point.lon)]
                else:
                    row += ["", ""]
            if schema.has_business_name:
                row.append(rec.business_name or "")
            if schema.has_usage_type:
                row.append(rec.usage_type or "")
            if schema.has_event_date:
                row.append(rec.event_date.isoformat() if rec.event_date else "")
            for col in schema.attr_columns:
                val = rec.attributes.get(col.name)
                if val is None:
                    row.append("")
                elif col.kind == "numeric":
                    row.append(repr(float(val)))
                else:
                    row.append(str(val))
            writer.writerow(row)


# --- geocoding ---------------------------------------------------------


@dataclass(frozen=True)
class GeocodeResult:
    query: str
    point: GeoPoint
    confidence: float


class GeocodeError(Exception):
    pass


class NotFound(GeocodeError):
    pass


class RateLimited(GeocodeError):
    def __init__(self, retry_after_s: float):
        super().__init__(f"rate limited; retry after {retry_after_s}s")
        self.retry_after_s = retry_after_s


class StubGeocoder:
    """Deterministic offline geocoder.

    Hashes the canonical address form into a bounding box: same address in,
    same point out, always confidence 1.0. Bounding box is
    (min_lat, min_lon, max_lat, max_lon).
    """

    def __init__(self, bbox: tuple[float, float, float, float]):
        min_lat, min_lon, max_lat, max_lon = bbox
        if not (min_lat < max_lat and min_lon < max_lon):
            raise ValueError("degenerate bounding box")
        self.bbox = bbox

    def geocode(self, address: PostalAddress) -> GeocodeResult:
        query = format_address(address)
        digest = hashlib.sha256(query.encode("utf-8")).digest()
        a = int.from_bytes(digest[:8], "big")
        b = int.from_bytes(digest[8:16], "big")
        fa = (a % (1 << 53) + 0.5) / (1 << 53)
        fb = (b % (1 << 53) + 0.5) / (1 << 53)
        min_lat, min_lon, max_lat, max_lon = self.bbox
        point = GeoPoint(lat=min_lat + fa * (max_lat - min_lat),
                         lon=min_lon + fb * (max_lon - min_lon))
        return GeocodeResult(query=query, point=point, confidence=1.0)


class LiveGeocoder:
    """HTTP client for a geocoding endpoint selected by GEOCODER_URL.

    Expects JSON {"lat": .., "lon": .., "confidence": ..}; 404 maps to
    NotFound and 429 to RateLimited. Requests are serialized.
    """

    def __init__(self, url: Optional[str] = None, timeout_s: float = 10.0):
        self.url = url or os.environ.get("GEOCODER_URL")
        if not self.url:
            raise GeocodeError("no geocoder URL configured")
        self.timeout_s = timeout_s
        self._lock = threading.Lock()

    def geocode(self, address: PostalAddress) -> GeocodeResult:
        query = format_address(address)
        full = f"{self.url}?q={urllib.parse.quote(query)}"
        with self._lock:
            try:
                with urllib.request.urlopen(full, timeout=self.timeout_s) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
            except urllib.error.HTTPError as err:
                if err.code == 404:
                    raise NotFound(query) from err
                if err.code == 429:
                    retry = float(err.headers.get("Retry-After", "1"))
                    raise RateLimited(retry) from err
                raise GeocodeError(str(err)) from err
        return GeocodeResult(query=query,
                             point=GeoPoint(lat=float(payload["lat"]),
                                            lon=float(payload["lon"])),
                             confidence=float(payload.get("confidence", 1.0)))


def geocode(address: PostalAddress, client) -> GeocodeResult:
    return client.geocode(address)


def default_geocoder(bbox: tuple[float, float, float, float]):
    """Live client when GEOCODER_URL is set, offline stub otherwise."""
    if os.environ.get("GEOCODER_URL"):
        return LiveGeocoder()
    return StubGeocoder(bbox)
