"""Record linkage across datasets: blocking, the three-tier match cascade,
one-to-one link selection, and fusion into unified property records.

Evidence tiers, strongest first: shared parcel ID, exact normalized
address, then geocode proximity with fuzzy business-name agreement.
"""
from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Iterable, Optional, Sequence

from .address import PostalAddress, name_similarity
from .geo import GeoPoint, geohash_encode, geohash_neighbors, haversine_m
from .ingest import Dataset, SourceRecord


class Tier(str, Enum):
    PARCEL_ID = "PARCEL_ID"
    ADDRESS_EXACT = "ADDRESS_EXACT"
    GEO_FUZZY = "GEO_FUZZY"
    NO_MATCH = "NO_MATCH"


_TIER_RANK = {Tier.PARCEL_ID: 0, Tier.ADDRESS_EXACT: 1, Tier.GEO_FUZZY: 2}


@dataclass(frozen=True)
class LinkConfig:
    radius_meters: float = 50.0
    name_threshold: float = 0.85
    block_precision: int = 6
    require_name_with_geo: bool = True

    def __post_init__(self) -> None:
        if self.radius_meters <= 0:
            raise ValueError("radius_meters must be positive")
        if not (0 < self.name_threshold <= 1):
            raise ValueError("name_threshold must be in (0, 1]")


@dataclass(frozen=True)
class LinkDecision:
    left_id: str
    right_id: str
    tier: Tier
    similarity: Optional[float] = None
    distance_meters: Optional[float] = None


@dataclass
class PropertyRecord:
    """Fused view of one property; property_id is a digest of the provenance."""

    property_id: str
    canonical_address: Optional[PostalAddress] = None
    point: Optional[GeoPoint] = None
    parcel_id: Optional[str] = None
    business_name: Optional[str] = None
    usage_type: Optional[str] = None
    attributes: dict = field(default_factory=dict)
    provenance: list = field(default_factory=list)  # [(Dataset, source_id)]


def _addr(record):
    a = getattr(record, "address", None)
    if a is None:
        a = getattr(record, "canonical_address", None)
    return a


def match_pair(a, b, cfg: LinkConfig) -> LinkDecision:
    """Run the evidence cascade on one record pair; first tier that fires wins.

    Works on anything exposing parcel_id / address (or canonical_address) /
    point / business_name, so both source and fused records qualify. Name
    similarity is expensive (edit distance), so it is only computed where
    the geo tier needs it; decisions settled by stronger evidence carry
    similarity=None.
    """
    left_id = _record_id(a)
    right_id = _record_id(b)
    pt_a = getattr(a, "point", None)
    pt_b = getattr(b, "point", None)
    dist = haversine_m(pt_a, pt_b) if pt_a is not None and pt_b is not None else None

    pid_a = getattr(a, "parcel_id", None)
    pid_b = getattr(b, "parcel_id", None)
    if pid_a and pid_b and pid_a == pid_b:
        return LinkDecision(left_id, right_id, Tier.PARCEL_ID, None, dist)

    addr_a, addr_b = _addr(a), _addr(b)
    if addr_a is not None and addr_b is not None \
            and addr_a.street_number == addr_b.street_number \
            and addr_a.street_name == addr_b.street_name \
            and addr_a.street_suffix == addr_b.street_suffix \
            and (addr_a.zip5 is None or addr_b.zip5 is None or addr_a.zip5 == addr_b.zip5):
        return LinkDecision(left_id, right_id, Tier.ADDRESS_EXACT, None, dist)

    if dist is not None and dist <= cfg.radius_meters:
        name_a = getattr(a, "business_name", None)
        name_b = getattr(b, "business_name", None)
        sim = name_similarity(name_a, name_b) if name_a and name_b else None
        if not cfg.require_name_with_geo or (sim is not None and sim >= cfg.name_threshold):
            return LinkDecision(left_id, right_id, Tier.GEO_FUZZY, sim, dist)
        return LinkDecision(left_id, right_id, Tier.NO_MATCH, sim, dist)

    return LinkDecision(left_id, right_id, Tier.NO_MATCH, None, dist)


def _record_id(record) -> str:
    for attr in ("source_id", "property_id"):
        val = getattr(record, attr, None)
        if val is not None:
            return str(val)
    raise ValueError(f"record without an id: {record!r}")


def block_candidates(left: Sequence, right: Sequence,
                     cfg: LinkConfig) -> list[tuple]:
    """Candidate pairs from geohash-cell, zip5, and parcel-id blocking.

    The union covers every pair any tier could match when geocodes exist and
    are accurate to well under a cell (~1.2 km at precision 6).
    """
    by_cell: dict[str, list[int]] = {}
    by_zip: dict[str, list[int]] = {}
    by_parcel: dict[str, list[int]] = {}
    for j, rec in enumerate(right):
        pt = getattr(rec, "point", None)
        if pt is not None:
            by_cell.setdefault(
                geohash_encode(pt.lat, pt.lon, cfg.block_precision), []).append(j)
        addr = _addr(rec)
        if addr is not None and addr.zip5:
            by_zip.setdefault(addr.zip5, []).append(j)
        pid = getattr(rec, "parcel_id", None)
        if pid:
            by_parcel.setdefault(pid, []).append(j)

    pairs: list[tuple] = []
    for i, rec in enumerate(left):
        seen: set[int] = set()
        pt = getattr(rec, "point", None)
        if pt is not None:
            for cell in geohash_neighbors(
                    geohash_encode(pt.lat, pt.lon, cfg.block_precision)):
                seen.update(by_cell.get(cell, ()))
        addr = _addr(rec)
        if addr is not None and addr.zip5:
            seen.update(by_zip.get(addr.zip5, ()))
        pid = getattr(rec, "parcel_id", None)
        if pid:
            seen.update(by_parcel.get(pid, ()))
        for j in sorted(seen):
            pairs.append((rec, right[j]))
    return pairs


def _rank_key(d: LinkDecision):
    # similarity None sorts as a constant within its tier; tier dominates.
    sim = d.similarity if d.similarity is not None else 2.0
    dist = d.distance_meters if d.distance_meters is not None else -1.0
    return (_TIER_RANK[d.tier], -sim, dist, d.left_id, d.right_id)


def link_datasets(left: Sequence, right: Sequence,
                  cfg: LinkConfig) -> list[LinkDecision]:
    """One-to-one links between two datasets.

    Candidate decisions are ranked (tier, similarity desc, distance asc,
    ids) and selected greedily so each record joins at most one link. The
    ranking is total, so the result is deterministic.
    """
    decisions = []
    for a, b in block_candidates(left, right, cfg):
        d = match_pair(a, b, cfg)
        if d.tier != Tier.NO_MATCH:
            decisions.append(d)
    decisions.sort(key=_rank_key)
    used_left: set[str] = set()
    used_right: set[str] = set()
    selected = []
    for d in decisions:
        if d.left_id in used_left or d.right_id in used_right:
            continue
        used_left.add(d.left_id)
        used_right.add(d.right_id)
        selected.append(d)
    return selected


def link_quality(predicted: Iterable[tuple[str, str]],
                 truth: Iterable[tuple[str, str]]) -> tuple[float, float]:
    """(precision, recall) of predicted id pairs against ground truth."""
    pred = {frozenset(p) for p in predicted}
    true = {frozenset(p) for p in truth}
    if not pred:
        return (1.0 if not true else 0.0, 0.0 if true else 1.0)
    hits = len(pred & true)
    precision = hits / len(pred)
    recall = hits / len(true) if true else 1.0
    return precision, recall


# --- fusion ------------------------------------------------------------

# Field precedence by dataset, most authoritative first.
_PARCEL_ORDER = [Dataset.PARCEL, Dataset.COSTAR, Dataset.SCI, Dataset.CO]
_ADDRESS_ORDER = [Dataset.PARCEL, Dataset.BUSINESS_LICENSE, Dataset.COSTAR,
                  Dataset.PLACES, Dataset.LIQUOR_LICENSE, Dataset.CO,
                  Dataset.FIRE_PERMITS, Dataset.FIRE_INCIDENTS]
_NAME_ORDER = [Dataset.BUSINESS_LICENSE, Dataset.PLACES, Dataset.COSTAR,
               Dataset.LIQUOR_LICENSE, Dataset.FIRE_PERMITS, Dataset.PARCEL]
_USAGE_ORDER = [Dataset.BUSINESS_LICENSE, Dataset.FIRE_PERMITS, Dataset.COSTAR,
                Dataset.PLACES]


def property_id_for(provenance: Iterable[tuple[Dataset, str]]) -> str:
    key = "|".join(f"{ds.value}:{sid}" for ds, sid in sorted(
        provenance, key=lambda t: (t[0].value, t[1])))
    return hashlib.sha1(key.encode("utf-8")).hexdigest()[:12]


def _first_by_order(cluster: list[SourceRecord], order: list[Dataset], getter):
    ranked = sorted(cluster, key=lambda r: (
        order.index(r.dataset) if r.dataset in order else len(order),
        r.source_id))
    for rec in ranked:
        val = getter(rec)
        if val is not None:
            return val
    return None


def fuse(cluster: Sequence[SourceRecord]) -> PropertyRecord:
    """Merge transitively linked records into one PropertyRecord.

    Attribute keys get a dataset prefix (second and later records from the
    same dataset get ordinal prefixes) so nothing collides; the result is
    invariant under permutation of the cluster.
    """
    if not cluster:
        raise ValueError("empty cluster")
    ordered = sorted(cluster, key=lambda r: (r.dataset.value, r.source_id))
    provenance = [(r.dataset, r.source_id) for r in ordered]
    if len(set(provenance)) != len(provenance):
        raise ValueError("duplicate records in cluster")

    attributes: dict = {}
    ds_counts: dict[Dataset, int] = {}
    for rec in ordered:
        n = ds_counts.get(rec.dataset, 0) + 1
        ds_counts[rec.dataset] = n
        prefix = rec.dataset.value.lower() if n == 1 else f"{rec.dataset.value.lower()}#{n}"
        for key, val in rec.attributes.items():
            attributes[f"{prefix}.{key}"] = val
        # Disagreeing addresses from lower-precedence sources stay reachable.
        if rec.address is not None:
            from .address import format_address
            attributes.setdefault(f"{prefix}.address", format_address(rec.address))

    return PropertyRecord(
        property_id=property_id_for(provenance),
        canonical_address=_first_by_order(ordered, _ADDRESS_ORDER, lambda r: r.address),
        point=_first_by_order(ordered, _ADDRESS_ORDER, lambda r: r.point),
        parcel_id=_first_by_order(ordered, _PARCEL_ORDER, lambda r: r.parcel_id),
        business_name=_first_by_order(ordered, _NAME_ORDER, lambda r: r.business_name),
        usage_type=_first_by_order(ordered, _USAGE_ORDER, lambda r: r.usage_type),
        attributes=attributes,
        provenance=provenance,
    )


class _UnionFind:
    def __init__(self):
        self.parent: dict = {}

    def find(self, x):
        self.parent.setdefault(x, x)
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # Deterministic root choice keeps cluster iteration stable.
            if ra > rb:
                ra, rb = rb, ra
            self.parent[rb] = ra


PROPERTY_DATASETS = (Dataset.COSTAR, Dataset.PARCEL, Dataset.SCI,
                     Dataset.BUSINESS_LICENSE, Dataset.LIQUOR_LICENSE,
                     Dataset.PLACES)


def cluster_and_fuse(records_by_dataset: dict[Dataset, list[SourceRecord]],
                     cfg: LinkConfig,
                     ) -> tuple[list[PropertyRecord], list[tuple[Dataset, Dataset, LinkDecision]]]:
    """Link every dataset pair, take the transitive closure, fuse clusters.

    Records sharing a parcel id always cluster (this is how several
    buildings on one parcel become a single property). Returns the fused
    records sorted by property_id plus all selected pairwise links.
    """
    datasets = [ds for ds in PROPERTY_DATASETS if records_by_dataset.get(ds)]
    uf = _UnionFind()
    by_key: dict[tuple, SourceRecord] = {}
    parcel_groups: dict[str, list[tuple]] = {}
    for ds in datasets:
        for rec in records_by_dataset[ds]:
            key = (ds, rec.source_id)
            if key in by_key:
                raise ValueError(f"duplicate source_id {rec.source_id} in {ds.value}")
            by_key[key] = rec
            uf.find(key)
            if rec.parcel_id:
                parcel_groups.setdefault(rec.parcel_id, []).append(key)
    for keys in parcel_groups.values():
        for other in keys[1:]:
            uf.union(keys[0], other)

    all_links: list[tuple[Dataset, Dataset, LinkDecision]] = []
    for i, left_ds in enumerate(datasets):
        for right_ds in datasets[i + 1:]:
            links = link_datasets(records_by_dataset[left_ds],
                                  records_by_dataset[right_ds], cfg)
            for d in links:
                uf.union((left_ds, d.left_id), (right_ds, d.right_id))
                all_links.append((left_ds, right_ds, d))

    clusters: dict[tuple, list[SourceRecord]] = {}
    for key, rec in by_key.items():
        clusters.setdefault(uf.find(key), []).append(rec)
    fused = [fuse(cluster) for cluster in clusters.values()]
    fused.sort(key=lambda p: p.property_id)
    return fused, all_links


def attach_events(properties: Sequence[PropertyRecord],
                  events: Sequence[SourceRecord],
                  cfg: LinkConfig) -> dict[str, list[SourceRecord]]:
    """Attach event records (fires, permits, crimes) to their best property.

    Events do not merge properties; each event joins at most one property via
    the ranked cascade. Unmatched events are returned under the key "".
    """
    out: dict[str, list[SourceRecord]] = {p.property_id: [] for p in properties}
    unmatched: list[SourceRecord] = []
    for event, prop in _best_matches(events, properties, cfg):
        if prop is None:
            unmatched.append(event)
        else:
            out[prop.property_id].append(event)
    for lst in out.values():
        lst.sort(key=lambda r: (r.event_date or date.min, r.source_id))
    if unmatched:
        out[""] = sorted(unmatched, key=lambda r: r.source_id)
    return out


def _best_matches(left: Sequence, right: Sequence, cfg: LinkConfig):
    """Yield (left record, best matching right record or None) pairs."""
    by_id = {}
    candidates: dict[str, list[LinkDecision]] = {}
    right_by_id = {_record_id(r): r for r in right}
    for a, b in block_candidates(left, right, cfg):
        d = match_pair(a, b, cfg)
        if d.tier != Tier.NO_MATCH:
            candidates.setdefault(d.left_id, []).append(d)
        by_id[d.left_id] = a
    for rec in left:
        rid = _record_id(rec)
        options = candidates.get(rid)
        if not options:
            yield rec, None
            continue
        best = min(options, key=_rank_key)
        yield rec, right_by_id[best.right_id]


def export_links(path: str,
                 links: Sequence[tuple[Dataset, Dataset, LinkDecision]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["leftDataset", "leftId", "rightDataset", "rightId",
                         "tier", "similarity", "distanceMeters"])
        for left_ds, right_ds, d in links:
            writer.writerow([
                left_ds.value, d.left_id, right_ds.value, d.right_id, d.tier.value,
                "" if d.similarity is None else repr(d.similarity),
                "" if d.distance_meters is None else repr(d.distance_meters),
            ])
