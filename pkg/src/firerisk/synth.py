"""Synthetic municipal corpora with known ground truth.

Stands in for proprietary property datasets: the same underlying
properties appear in several datasets under controlled corruption
(abbreviation swaps, character typos, coordinate jitter), and fire
incidents are drawn from a planted logistic model so the downstream
pipeline has recoverable signal.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Optional

import numpy as np

from .address import (BUILTIN_DIRECTIONALS, BUILTIN_SUFFIXES,
                      NormalizationConfig, normalize_address)
from .geo import EARTH_RADIUS_M, GeoPoint, OverlayKind, Polygon
from .ingest import DATASET_SCHEMAS, Dataset, SourceRecord, write_dataset

ATLANTA_BBOX = (33.62, -84.56, 33.92, -84.28)  # (min_lat, min_lon, max_lat, max_lon)

_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class Corruption:
    typo_rate: float = 0.0
    abbrev_rate: float = 0.0
    jitter_meters: float = 0.0


@dataclass(frozen=True)
class Signal:
    """Planted fire-risk signal: per-year P(fire) = sigmoid(bias + sum w*z).

    Weights apply to the standardized log of the named property feature.
    When bias is None it is calibrated so the mean per-year fire
    probability equals n_fires / n_properties.
    """
    weights: dict = field(default_factory=dict)
    bias: Optional[float] = None


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    n_properties: int
    n_fires: int
    window_start: date
    window_end: date
    corruption: Corruption = Corruption()
    signal: Signal = Signal()
    bbox: tuple = ATLANTA_BBOX
    inspected_fraction: float = 0.4
    missing_rate: float = 0.05


@dataclass
class PropertyTruth:
    ref: str
    parcel_id: str
    address_raw: str
    point: GeoPoint
    business_name: str
    usage_type: str
    attributes: dict
    zip5: str
    fire_prob: float
    fire_dates: list


@dataclass
class SynthResult:
    records: dict
    ground_truth_links: list      # [(source_id, source_id)]
    ground_truth_fires: list      # [(property_ref, date)]
    properties: list              # [PropertyTruth]
    yearly_windows: list          # [(start, end)]


_STREET1 = ["PEACHTREE", "PIEDMONT", "MORELAND", "BRIARCLIFF", "CASCADE",
            "DELOWE", "FAIRBURN", "GLENWOOD", "HOWELL", "JONESBORO",
            "LAKEWOOD", "MEMORIAL", "NORTHSIDE", "OAKLAND", "PONCE",
            "RALPH", "SYLVAN", "TUXEDO", "VIRGINIA", "WESTVIEW",
            "BOLTON", "CAMPBELLTON", "DEKALB", "EUCLID"]
_STREET2 = ["MILL", "CREEK", "PARK", "HILLS", "GROVE", "RIDGE",
            "VALLEY", "SPRINGS", "FOREST", "HEIGHTS", "LANDING", "COMMONS"]
_SUFFIX_CYCLE = ["ST", "AVE", "DR", "RD", "BLVD", "WAY", "LN", "CT"]

_BIZ1 = ["ACME", "SUMMIT", "PEACH", "GOLDEN", "CAPITAL",
         "METRO", "SOUTHERN", "ROYAL", "CRESCENT", "UNION"]
_BIZ2 = ["AUTO", "GRILL", "MARKET", "SUPPLY", "TEXTILE",
         "LODGE", "GARDEN", "WORKS", "DEPOT", "STUDIO"]
_BIZ3 = ["SERVICES", "COMPANY", "PARTNERS", "HOLDINGS", "ENTERPRISES",
         "GROUP", "CENTER", "OUTLET", "TRADING", "COLLECTIVE"]

_USAGE_BASE = ["RESTAURANT", "MOTOR VEHICLE REPAIR", "DAY CARE", "SCHOOL",
               "CHURCH", "WAREHOUSE", "TEXTILE STORAGE", "NIGHTCLUB",
               "GAS STATION", "HOTEL", "OFFICE BUILDING", "RETAIL STORE",
               "GROCERY", "BAKERY", "THEATER", "FITNESS CENTER", "SALON",
               "CLINIC", "PHARMACY", "LAUNDRY"]
_USAGE_MOD = ["", "SMALL ", "LARGE ", "COMMERCIAL ", "INDUSTRIAL ", "24 HOUR "]

_PROPERTY_TYPES = ["RETAIL", "OFFICE", "INDUSTRIAL", "MULTI_FAMILY",
                   "RESTAURANT", "WAREHOUSE", "MIXED_USE"]

# Variant spellings used by the abbreviation corruption; the normalizer
# canonicalizes all of them back.
_SUFFIX_VARIANTS: dict = {}
for _var, _canon in BUILTIN_SUFFIXES.items():
    _SUFFIX_VARIANTS.setdefault(_canon, []).append(_var)
_DIR_VARIANTS: dict = {}
for _var, _canon in BUILTIN_DIRECTIONALS.items():
    _DIR_VARIANTS.setdefault(_canon, []).append(_var)

_LETTERS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"


def usage_type_pool() -> list[str]:
    return [mod + base for mod in _USAGE_MOD for base in _USAGE_BASE]


def _validate(cfg: SynthConfig) -> None:
    if cfg.n_properties <= 0:
        raise InvalidConfig("n_properties must be positive")
    if not (0 <= cfg.n_fires <= cfg.n_properties):
        raise InvalidConfig("n_fires must be in [0, n_properties]")
    if cfg.window_start >= cfg.window_end:
        raise InvalidConfig("window_start must precede window_end")
    for name, rate in (("typo_rate", cfg.corruption.typo_rate),
                       ("abbrev_rate", cfg.corruption.abbrev_rate),
                       ("inspected_fraction", cfg.inspected_fraction),
                       ("missing_rate", cfg.missing_rate)):
        if not (0.0 <= rate <= 1.0):
            raise InvalidConfig(f"{name} must be in [0, 1]")
    if cfg.corruption.jitter_meters < 0:
        raise InvalidConfig("jitter_meters must be >= 0")


def _add_years(d: date, n: int) -> date:
    try:
        return d.replace(year=d.year + n)
    except ValueError:  # Feb 29
        return d.replace(year=d.year + n, day=28)


def yearly_windows(start: date, end: date) -> list[tuple[date, date]]:
    """Anniversary-aligned one-year windows covering [start, end)."""
    out = []
    i = 0
    while _add_years(start, i) < end:
        out.append((_add_years(start, i), min(_add_years(start, i + 1), end)))
        i += 1
    return out


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _calibrate_bias(scores: np.ndarray, target: float) -> float:
    if target <= 0.0:
        return -30.0
    lo, hi = -30.0, 30.0
    for _ in range(80):
        mid = (lo + hi) / 2
        if _sigmoid(scores + mid).mean() < target:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def _typo(rng: np.random.Generator, text: str) -> str:
    """1-2 character edits restricted to letters."""
    chars = list(text)
    for _ in range(int(rng.integers(1, 3))):
        positions = [i for i, c in enumerate(chars) if c.isalpha()]
        if not positions:
            break
        pos = positions[int(rng.integers(0, len(positions)))]
        op = int(rng.integers(0, 3))
        letter = _LETTERS[int(rng.integers(0, 26))]
        if op == 0:
            chars[pos] = letter
        elif op == 1 and len(chars) > 1:
            del chars[pos]
        else:
            chars.insert(pos, letter)
    return "".join(chars)


def _jitter(rng: np.random.Generator, pt: GeoPoint, radius_m: float) -> GeoPoint:
    if radius_m <= 0:
        return pt
    r = radius_m * math.sqrt(float(rng.random()))
    theta = 2 * math.pi * float(rng.random())
    dlat = r * math.cos(theta) / _M_PER_DEG
    dlon = r * math.sin(theta) / (_M_PER_DEG * math.cos(math.radians(pt.lat)))
    return GeoPoint(lat=pt.lat + dlat, lon=pt.lon + dlon)


@dataclass
class _AddressParts:
    number: str
    name: str
    suffix: str       # canonical code
    directional: str  # canonical code
    city: str
    state: str
    zip5: str

    def render(self, name: str, suffix: str, directional: str) -> str:
        return (f"{self.number} {name} {suffix} {directional}, "
                f"{self.city}, {self.state} {self.zip5}")


def _corrupt_record(rng: np.random.Generator, parts: _AddressParts,
                    business_name: Optional[str], cor: Corruption
                    ) -> tuple[str, Optional[str]]:
    """Apply abbreviation and typo corruption; returns (raw address, name).

    A typo event hits one text field, chosen uniformly among the street
    name and (when present) the business name.
    """
    street, suffix, directional = parts.name, parts.suffix, parts.directional
    if cor.abbrev_rate > 0 and rng.random() < cor.abbrev_rate:
        variants = _SUFFIX_VARIANTS[suffix]
        suffix = variants[int(rng.integers(0, len(variants)))]
        variants = _DIR_VARIANTS[directional]
        directional = variants[int(rng.integers(0, len(variants)))]
    if cor.typo_rate > 0 and rng.random() < cor.typo_rate:
        if business_name is not None and rng.random() < 0.5:
            business_name = _typo(rng, business_name)
        else:
            street = _typo(rng, street)
    return parts.render(street, suffix, directional), business_name


def synth_generate(cfg: SynthConfig) -> SynthResult:
    """Generate the linked multi-dataset corpus. Deterministic given the seed."""
    _validate(cfg)
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_properties
    min_lat, min_lon, max_lat, max_lon = cfg.bbox
    side = math.ceil(math.sqrt(n))
    lat_step = (max_lat - min_lat) / side
    lon_step = (max_lon - min_lon) / side

    # Latent numeric attributes (vectorized, one draw order forever).
    floor_size = np.exp(rng.normal(8.3, 1.0, n))
    land_ratio = rng.uniform(1.5, 4.0, n)
    units = np.maximum(1.0, np.round(np.exp(rng.normal(1.0, 1.1, n))))
    value_per_sqft = rng.uniform(80.0, 220.0, n)
    n_buildings = 1.0 + rng.poisson(0.4, n)
    tax_rate = rng.uniform(0.008, 0.02, n)
    lot_ratio = rng.uniform(1.0, 1.3, n)
    percent_leased = rng.uniform(30.0, 100.0, n)
    year_built = rng.integers(1900, 2011, n).astype(float)
    ptype_idx = rng.integers(0, len(_PROPERTY_TYPES), n)

    land_area = floor_size * land_ratio
    appraised = floor_size * value_per_sqft
    taxes = appraised * tax_rate
    lot_size = land_area * lot_ratio
    living_units = np.where(np.array(_PROPERTY_TYPES)[ptype_idx] == "MULTI_FAMILY",
                            units, np.minimum(units, 2.0))

    # Skewed usage-type assignment so "most inspected" rankings are non-flat.
    pool = usage_type_pool()
    usage_weights = 1.0 / (np.arange(len(pool)) + 1.0)
    usage_idx = rng.choice(len(pool), size=n, p=usage_weights / usage_weights.sum())

    inspected = rng.permutation(n) < int(round(cfg.inspected_fraction * n))

    # Planted per-year fire probability.
    named = {"floor_size": floor_size, "land_area": land_area,
             "number_of_units": units, "appraised_value": appraised,
             "number_of_buildings": n_buildings, "total_taxes": taxes,
             "lot_size": lot_size, "living_units": living_units,
             "percent_leased": percent_leased, "year_built": year_built}
    score = np.zeros(n)
    for feat, w in sorted(cfg.signal.weights.items()):
        if feat not in named:
            raise InvalidConfig(f"unknown signal feature {feat!r}")
        logs = np.log1p(named[feat])
        sd = logs.std()
        score += w * ((logs - logs.mean()) / sd if sd > 0 else 0.0)
    bias = cfg.signal.bias
    if bias is None:
        bias = _calibrate_bias(score, cfg.n_fires / cfg.n_properties)
    prob = _sigmoid(bias + score)

    windows = yearly_windows(cfg.window_start, cfg.window_end)
    fire_draws = rng.random((n, len(windows))) < prob[:, None]
    fire_day_frac = rng.random((n, len(windows)))

    missing_mask = rng.random((n, 10)) < cfg.missing_rate

    norm_cfg = NormalizationConfig.default()
    zip_blocks = 4
    truths: list[PropertyTruth] = []
    for i in range(n):
        row, col = divmod(i, side)
        lat = min_lat + (row + 0.5) * lat_step
        lon = min_lon + (col + 0.5) * lon_step
        zr = min(row * zip_blocks // side, zip_blocks - 1)
        zc = min(col * 3 // side, 2)
        zip5 = f"303{zr * 3 + zc:02d}"
        nr = min(row * 5 // side, 4)
        nc = min(col * 4 // side, 3)
        neighborhood = f"NBHD_{nr * 4 + nc:02d}"
        parts = _AddressParts(
            number=str(100 + 4 * col),
            name=f"{_STREET1[row % len(_STREET1)]} {_STREET2[(row // len(_STREET1)) % len(_STREET2)]}",
            suffix=_SUFFIX_CYCLE[row % len(_SUFFIX_CYCLE)],
            directional=("N" if lat >= (min_lat + max_lat) / 2 else "S")
                        + ("E" if lon >= (min_lon + max_lon) / 2 else "W"),
            city="ATLANTA", state="GA", zip5=zip5)
        biz = (f"{_BIZ1[i % 10]} {_BIZ2[(i // 10) % 10]} "
               f"{_BIZ3[(i // 100) % 10]} {i:05d}")
        attrs = {"floor_size": float(floor_size[i]),
                 "land_area": float(land_area[i]),
                 "number_of_units": float(units[i]),
                 "appraised_value": float(appraised[i]),
                 "number_of_buildings": float(n_buildings[i]),
                 "total_taxes": float(taxes[i]),
                 "lot_size": float(lot_size[i]),
                 "living_units": float(living_units[i]),
                 "percent_leased": float(percent_leased[i]),
                 "year_built": float(year_built[i]),
                 "property_type": _PROPERTY_TYPES[ptype_idx[i]],
                 "neighborhood": neighborhood}
        fire_dates = []
        for w, (wstart, wend) in enumerate(windows):
            if fire_draws[i, w]:
                span = (wend - wstart).days
                fire_dates.append(wstart + timedelta(days=int(fire_day_frac[i, w] * span)))
        truths.append(PropertyTruth(
            ref=f"P{i:06d}", parcel_id=f"14-{i // 1000:04d}-{i % 1000:04d}",
            address_raw=parts.render(parts.name, parts.suffix, parts.directional),
            point=GeoPoint(lat=lat, lon=lon), business_name=biz,
            usage_type=pool[usage_idx[i]], attributes=attrs, zip5=zip5,
            fire_prob=float(prob[i]), fire_dates=fire_dates))
        truths[-1].attributes["_parts"] = parts  # reused by the emitters below

    cor = cfg.corruption
    records: dict = {ds: [] for ds in
                     (Dataset.COSTAR, Dataset.PARCEL, Dataset.BUSINESS_LICENSE,
                      Dataset.FIRE_PERMITS, Dataset.FIRE_INCIDENTS)}

    costar_has_parcel = rng.random(n) < 0.7

    def emit(ds: Dataset, source_id: str, t: PropertyTruth, *,
             parcel_id=None, business_name=None, usage_type=None,
             event_date=None, attributes=None) -> SourceRecord:
        parts = t.attributes["_parts"]
        raw, name = _corrupt_record(rng, parts, business_name, cor)
        rec = SourceRecord(
            source_id=source_id, dataset=ds, parcel_id=parcel_id,
            address=normalize_address(raw, norm_cfg),
            point=_jitter(rng, t.point, cor.jitter_meters),
            business_name=name,
            usage_type=usage_type, event_date=event_date,
            attributes=attributes or {})
        records[ds].append(rec)
        return rec

    for i, t in enumerate(truths):
        costar_attrs = {}
        for k, (key, val) in enumerate(
                (key, t.attributes[key]) for key in
                ("floor_size", "land_area", "number_of_units", "appraised_value",
                 "number_of_buildings", "total_taxes", "lot_size", "living_units",
                 "percent_leased", "year_built")):
            if not missing_mask[i, k]:
                costar_attrs[key] = val
        costar_attrs["property_type"] = t.attributes["property_type"]
        costar_attrs["neighborhood"] = t.attributes["neighborhood"]
        emit(Dataset.COSTAR, f"CS-{t.ref}", t,
             parcel_id=t.parcel_id if costar_has_parcel[i] else None,
             business_name=t.business_name, usage_type=t.usage_type,
             attributes=costar_attrs)
        emit(Dataset.PARCEL, f"PR-{t.ref}", t, parcel_id=t.parcel_id,
             business_name=t.business_name,  # owner name on the parcel roll
             attributes={key: t.attributes[key] for key in
                         ("land_area", "appraised_value", "total_taxes", "lot_size")})
        emit(Dataset.BUSINESS_LICENSE, f"BL-{t.ref}", t,
             business_name=t.business_name, usage_type=t.usage_type,
             attributes={"license_year": float(cfg.window_start.year)})
        if inspected[i]:
            span = (cfg.window_end - cfg.window_start).days
            permit_date = cfg.window_start + timedelta(days=int(rng.random() * span))
            emit(Dataset.FIRE_PERMITS, f"FP-{t.ref}", t,
                 business_name=t.business_name, usage_type=t.usage_type,
                 event_date=permit_date)
        for d in t.fire_dates:
            emit(Dataset.FIRE_INCIDENTS, f"FI-{t.ref}-{d.isoformat()}", t,
                 event_date=d)

    for t in truths:
        del t.attributes["_parts"]

    links = []
    for t in truths:
        cs, pr, bl = f"CS-{t.ref}", f"PR-{t.ref}", f"BL-{t.ref}"
        links += [(cs, pr), (cs, bl), (pr, bl)]
    fires = [(t.ref, d) for t in truths for d in t.fire_dates]

    return SynthResult(records=records, ground_truth_links=links,
                       ground_truth_fires=fires, properties=truths,
                       yearly_windows=windows)


def write_corpus(result: SynthResult, out_dir: str) -> dict[str, str]:
    """One CSV per dataset plus ground truth files. Returns name -> path."""
    import csv
    import os

    paths = {}
    for ds, recs in result.records.items():
        path = os.path.join(out_dir, f"{ds.value.lower()}.csv")
        write_dataset(path, recs, DATASET_SCHEMAS[ds])
        paths[ds.value.lower()] = path

    path = os.path.join(out_dir, "ground_truth_links.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["left_id", "right_id"])
        writer.writerows(result.ground_truth_links)
    paths["ground_truth_links"] = path

    path = os.path.join(out_dir, "ground_truth_fires.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["property_ref", "event_date"])
        for ref, d in result.ground_truth_fires:
            writer.writerow([ref, d.isoformat()])
    paths["ground_truth_fires"] = path
    return paths


def _rect(min_lat, min_lon, max_lat, max_lon, id_, kind, name) -> Polygon:
    ring = (GeoPoint(min_lat, min_lon), GeoPoint(min_lat, max_lon),
            GeoPoint(max_lat, max_lon), GeoPoint(max_lat, min_lon))
    return Polygon(rings=(ring,), id=id_, kind=kind, name=name)


def make_overlays(bbox: tuple = ATLANTA_BBOX) -> dict[OverlayKind, list[Polygon]]:
    """Rectangular stand-ins for the city boundary and regional overlays."""
    min_lat, min_lon, max_lat, max_lon = bbox
    dlat, dlon = max_lat - min_lat, max_lon - min_lon

    def grid(rows, cols, kind, prefix):
        out = []
        for r in range(rows):
            for c in range(cols):
                out.append(_rect(
                    min_lat + r * dlat / rows, min_lon + c * dlon / cols,
                    min_lat + (r + 1) * dlat / rows, min_lon + (c + 1) * dlon / cols,
                    f"{prefix}{r * cols + c + 1}", kind,
                    f"{prefix}{r * cols + c + 1}"))
        return out

    return {
        OverlayKind.CITY: [_rect(min_lat, min_lon, max_lat, max_lon,
                                 "ATL", OverlayKind.CITY, "CITY BOUNDARY")],
        OverlayKind.NPU: grid(3, 3, OverlayKind.NPU, "NPU-"),
        OverlayKind.BATTALION: grid(2, 2, OverlayKind.BATTALION, "BAT-"),
        OverlayKind.COUNCIL_DISTRICT: grid(1, 4, OverlayKind.COUNCIL_DISTRICT, "CD-"),
    }
