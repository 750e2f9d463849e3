"""Design-matrix construction: imputation with missingness flags, log
transforms, one-hot expansion, time-windowed labels, and property-year
expansion.

Missing numerics become 0 plus a companion <name>_missing indicator;
missing or unseen categoricals become the all-zeros code. Variables are
declarative configuration, not a search procedure.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from datetime import date
from enum import Enum
from typing import Iterable, Optional, Sequence

import numpy as np


class VariableKind(str, Enum):
    NUMERIC = "NUMERIC"
    CATEGORICAL = "CATEGORICAL"
    BINARY = "BINARY"


class NegativeValue(ValueError):
    pass


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    kind: VariableKind
    log_transform: bool = False
    missing_indicator: bool = True


@dataclass(frozen=True)
class FeatureSchema:
    variables: tuple

    def __post_init__(self) -> None:
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SchemaError("variable names must be unique")
        for v in self.variables:
            if v.log_transform and v.kind != VariableKind.NUMERIC:
                raise SchemaError(f"{v.name}: log_transform only applies to NUMERIC")

    @classmethod
    def from_json(cls, path: str) -> "FeatureSchema":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls.from_dict(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "FeatureSchema":
        variables = tuple(
            Variable(name=v["name"], kind=VariableKind(v["kind"]),
                     log_transform=v.get("logTransform", False),
                     missing_indicator=v.get("missingIndicator", True))
            for v in doc["variables"])
        return cls(variables=variables)

    def to_dict(self) -> dict:
        return {"variables": [
            {"name": v.name, "kind": v.kind.value,
             "logTransform": v.log_transform,
             "missingIndicator": v.missing_indicator}
            for v in self.variables]}

    @classmethod
    def default(cls) -> "FeatureSchema":
        """Reconstruction of the building/parcel schema used throughout.

        The known top predictors (floor size, land area, units, value, ...)
        plus zip and neighborhood categoricals.
        """
        num = [("costar.floor_size", True), ("costar.land_area", True),
               ("costar.number_of_units", True), ("costar.appraised_value", True),
               ("costar.number_of_buildings", False), ("costar.total_taxes", True),
               ("costar.lot_size", True), ("costar.living_units", False),
               ("costar.percent_leased", False), ("costar.year_built", False)]
        variables = [Variable(n, VariableKind.NUMERIC, log_transform=lg) for n, lg in num]
        variables += [Variable("costar.property_type", VariableKind.CATEGORICAL),
                      Variable("costar.neighborhood", VariableKind.CATEGORICAL),
                      Variable("zip", VariableKind.CATEGORICAL)]
        return cls(variables=tuple(variables))


@dataclass
class FeatureMatrix:
    property_ids: list
    column_names: list
    values: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature matrix contains NaN or infinite entries")


@dataclass(frozen=True)
class TimeWindow:
    start: date
    end: date

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ValueError("window start must precede end")

    def contains(self, d: date) -> bool:
        return self.start <= d < self.end


def get_feature_value(record, name: str):
    """Attribute lookup with the two derived names: zip and usage_type."""
    val = record.attributes.get(name)
    if val is not None:
        return val
    if name == "zip":
        addr = getattr(record, "canonical_address", None)
        return addr.zip5 if addr is not None else None
    if name == "usage_type":
        return getattr(record, "usage_type", None)
    return None


def _as_float(val) -> Optional[float]:
    if val is None:
        return None
    if isinstance(val, (int, float)):
        return float(val)
    try:
        return float(str(val))
    except ValueError:
        return None  # unparseable counts as missing


def _as_binary(val) -> float:
    if val is None:
        return 0.0
    if isinstance(val, (int, float)):
        return 1.0 if val != 0 else 0.0
    return 1.0 if str(val).upper() in {"1", "TRUE", "T", "Y", "YES"} else 0.0


def log_transform(column: np.ndarray) -> np.ndarray:
    """Elementwise ln(1 + x); ln(1) = 0 keeps imputed zeros at zero."""
    column = np.asarray(column, dtype=float)
    if np.any(column < 0):
        raise NegativeValue("log transform requires non-negative values")
    return np.log1p(column)


def impute_and_flag(records: Sequence, schema: FeatureSchema
                    ) -> tuple[np.ndarray, list[str]]:
    """NUMERIC/BINARY portion of the matrix: zero-fill plus indicators.

    Absent values become 0; NUMERIC variables with missing_indicator grow a
    companion <name>_missing column that is 1 exactly where the value was
    absent.
    """
    cols: list[np.ndarray] = []
    names: list[str] = []
    for var in schema.variables:
        if var.kind == VariableKind.CATEGORICAL:
            continue
        if var.kind == VariableKind.BINARY:
            cols.append(np.array([_as_binary(get_feature_value(r, var.name))
                                  for r in records]))
            names.append(var.name)
            continue
        raw = [_as_float(get_feature_value(r, var.name)) for r in records]
        missing = np.array([v is None for v in raw], dtype=float)
        values = np.array([0.0 if v is None else v for v in raw])
        if var.log_transform:
            values = log_transform(values)
        cols.append(values)
        names.append(var.name)
        if var.missing_indicator:
            cols.append(missing)
            names.append(f"{var.name}_missing")
    matrix = np.column_stack(cols) if cols else np.zeros((len(records), 0))
    return matrix, names


def one_hot_expand(column: Sequence, categories: Sequence[str]) -> np.ndarray:
    """One column per observed category; exactly one 1 per known value.

    Missing values and categories unseen at fit time encode as all zeros.
    """
    index = {c: i for i, c in enumerate(categories)}
    out = np.zeros((len(column), len(categories)))
    for row, val in enumerate(column):
        if val is None:
            continue
        i = index.get(str(val))
        if i is not None:
            out[row, i] = 1.0
    return out


class FeatureBuilder:
    """Fits categorical vocabularies on training rows, then builds matrices.

    Categories are drawn from the rows passed to fit() only, so scoring-time
    categories never widen the matrix.
    """

    def __init__(self, schema: FeatureSchema):
        self.schema = schema
        self.categories_: dict[str, tuple] = {}

    def fit(self, records: Sequence) -> "FeatureBuilder":
        for var in self.schema.variables:
            if var.kind != VariableKind.CATEGORICAL:
                continue
            observed = {str(v) for v in
                        (get_feature_value(r, var.name) for r in records)
                        if v is not None}
            self.categories_[var.name] = tuple(sorted(observed))
        return self

    def transform(self, records: Sequence) -> FeatureMatrix:
        if not self.fitted:
            raise SchemaError("fit() before transform()")
        base, base_names = impute_and_flag(records, self.schema)
        blocks, names = [], []
        base_at = 0
        # Reassemble in schema order so column layout follows the variables.
        for var in self.schema.variables:
            if var.kind == VariableKind.CATEGORICAL:
                cats = self.categories_[var.name]
                blocks.append(one_hot_expand(
                    [get_feature_value(r, var.name) for r in records], cats))
                names += [f"{var.name}={c}" for c in cats]
            else:
                width = 1
                if var.kind == VariableKind.NUMERIC and var.missing_indicator:
                    width = 2
                blocks.append(base[:, base_at:base_at + width])
                names += base_names[base_at:base_at + width]
                base_at += width
        values = np.hstack(blocks) if blocks else np.zeros((len(records), 0))
        ids = [getattr(r, "property_id", None) or getattr(r, "source_id") for r in records]
        return FeatureMatrix(property_ids=ids, column_names=names, values=values)

    def fit_transform(self, records: Sequence) -> FeatureMatrix:
        return self.fit(records).transform(records)

    @property
    def fitted(self) -> bool:
        return all(v.name in self.categories_
                   for v in self.schema.variables
                   if v.kind == VariableKind.CATEGORICAL)


def build_labels(fires: Iterable[tuple[str, date]],
                 property_ids: Sequence[str],
                 window: TimeWindow) -> np.ndarray:
    """0/1 per property: 1 iff at least one linked fire falls in the window.

    Start date inclusive, end exclusive.
    """
    hot = {pid for pid, d in fires if window.contains(d)}
    return np.array([1 if pid in hot else 0 for pid in property_ids], dtype=np.int64)


def expansion_width(schema: FeatureSchema, categories: dict[str, int]) -> int:
    """Total column count: sum of cardinalities + 2*numeric_with_indicator
    + numeric_without + binary."""
    width = 0
    for var in schema.variables:
        if var.kind == VariableKind.CATEGORICAL:
            width += categories[var.name]
        elif var.kind == VariableKind.NUMERIC:
            width += 2 if var.missing_indicator else 1
        else:
            width += 1
    return width


def per_year_expansion(records: Sequence, fires: Iterable[tuple[str, date]],
                       windows: Sequence[TimeWindow]
                       ) -> tuple[list, np.ndarray, list[tuple[str, date]]]:
    """One row per property-year with time-dependent variables recomputed.

    Copies each record once per window, refreshing building_age (from any
    *year_built attribute) and years_since_inspection (from any
    *last_inspection_year attribute) as of the window start. Labels come
    from build_labels on each window.
    """
    for i, w in enumerate(windows):
        for other in windows[i + 1:]:
            if w.start < other.end and other.start < w.end:
                raise ValueError("yearly windows must be disjoint")
    fires = list(fires)
    expanded = []
    keys: list[tuple[str, date]] = []
    labels_parts = []
    ids = [getattr(r, "property_id", None) or getattr(r, "source_id") for r in records]
    for window in windows:
        year = window.start.year
        for rec, pid in zip(records, ids):
            attrs = dict(rec.attributes)
            for key, val in list(attrs.items()):
                base = key.rsplit(".", 1)[-1]
                fv = _as_float(val)
                if fv is None:
                    continue
                if base == "year_built":
                    attrs["building_age"] = float(year) - fv
                elif base == "last_inspection_year":
                    attrs["years_since_inspection"] = float(year) - fv
            expanded.append(replace(rec, attributes=attrs)
                            if hasattr(rec, "__dataclass_fields__") else rec)
            keys.append((pid, window.start))
        labels_parts.append(build_labels(fires, ids, window))
    labels = np.concatenate(labels_parts) if labels_parts else np.zeros(0, dtype=np.int64)
    return expanded, labels, keys


def matrix_to_csv(matrix: FeatureMatrix, path: str) -> None:
    """Audit export."""
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["property_id"] + matrix.column_names)
        for pid, row in zip(matrix.property_ids, matrix.values):
            writer.writerow([pid] + [repr(float(v)) for v in row])
