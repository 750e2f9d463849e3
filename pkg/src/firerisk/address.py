"""Postal address normalization and fuzzy string comparison.

Municipal datasets disagree on casing, abbreviation, punctuation, and how
much of the city/state/zip tail is present. Everything here reduces
addresses and business names to a canonical uppercase form so that
equality (or near-equality) means "same place".
"""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass, replace
from typing import Mapping, Optional


class AddressError(ValueError):
    pass


class EmptyAddress(AddressError):
    """Input was blank after trimming."""


class NoStreetNumber(AddressError):
    """No leading numeric token; caller should fall back to geocode-only matching."""


# Canonical USPS-style suffix codes keyed by the variants seen in the wild.
# Canonical codes map to themselves so the table is usable as a membership set.
BUILTIN_SUFFIXES = {
    "ALY": "ALY", "ALLEY": "ALY", "ALLEE": "ALY",
    "AVE": "AVE", "AV": "AVE", "AVEN": "AVE", "AVENUE": "AVE",
    "BLVD": "BLVD", "BOUL": "BLVD", "BOULEVARD": "BLVD",
    "BND": "BND", "BEND": "BND",
    "CIR": "CIR", "CIRC": "CIR", "CIRCLE": "CIR",
    "CT": "CT", "COURT": "CT",
    "CV": "CV", "COVE": "CV",
    "CRES": "CRES", "CRESCENT": "CRES",
    "DR": "DR", "DRV": "DR", "DRIVE": "DR",
    "EXT": "EXT", "EXTENSION": "EXT",
    "HWY": "HWY", "HIGHWAY": "HWY",
    "HOLW": "HOLW", "HOLLOW": "HOLW",
    "LN": "LN", "LANE": "LN",
    "LOOP": "LOOP",
    "PATH": "PATH",
    "PKWY": "PKWY", "PKY": "PKWY", "PARKWAY": "PKWY",
    "PL": "PL", "PLACE": "PL",
    "PLZ": "PLZ", "PLAZA": "PLZ",
    "PT": "PT", "POINT": "PT",
    "RD": "RD", "ROAD": "RD",
    "RDG": "RDG", "RIDGE": "RDG",
    "ROW": "ROW",
    "RUN": "RUN",
    "SQ": "SQ", "SQUARE": "SQ",
    "ST": "ST", "STR": "ST", "STREET": "ST",
    "TER": "TER", "TERR": "TER", "TERRACE": "TER",
    "TRL": "TRL", "TRAIL": "TRL",
    "VW": "VW", "VIEW": "VW",
    "WALK": "WALK",
    "WAY": "WAY", "WY": "WAY",
    "XING": "XING", "CROSSING": "XING",
}

BUILTIN_DIRECTIONALS = {
    "N": "N", "NORTH": "N",
    "S": "S", "SOUTH": "S",
    "E": "E", "EAST": "E",
    "W": "W", "WEST": "W",
    "NE": "NE", "NORTHEAST": "NE",
    "NW": "NW", "NORTHWEST": "NW",
    "SE": "SE", "SOUTHEAST": "SE",
    "SW": "SW", "SOUTHWEST": "SW",
}

# Secondary-unit designators; '#' is folded into UNIT.
UNIT_KEYWORDS = {
    "APT": "APT", "APARTMENT": "APT",
    "BLDG": "BLDG", "BUILDING": "BLDG",
    "FL": "FL", "FLOOR": "FL",
    "RM": "RM", "ROOM": "RM",
    "STE": "STE", "SUITE": "STE",
    "UNIT": "UNIT", "#": "UNIT",
}

_NUMBER_RE = re.compile(r"^\d+(?:-\d+)?[A-Z]?$")
_ZIP_RE = re.compile(r"^(\d{5})(?:-\d{4})?$")
_STATE_RE = re.compile(r"^[A-Z]{2}$")
# Characters deleted outright (abbreviation dots, possessives); everything
# else non-alphanumeric except '#' and '-' becomes whitespace.
_DELETE_RE = re.compile(r"[.'’]")
_SPACE_RE = re.compile(r"[^A-Z0-9#\- ]")


def _complete(table: Mapping[str, str]) -> dict[str, str]:
    out = {k.upper().strip(): v.upper().strip() for k, v in table.items()}
    for canon in list(out.values()):
        out.setdefault(canon, canon)
    return out


@dataclass(frozen=True)
class NormalizationConfig:
    """Variant -> canonical lookup tables driving the normalizer."""

    suffix_table: Mapping[str, str]
    directional_table: Mapping[str, str]
    drop_punctuation: bool = True

    @classmethod
    def default(cls) -> "NormalizationConfig":
        return cls(suffix_table=dict(BUILTIN_SUFFIXES),
                   directional_table=dict(BUILTIN_DIRECTIONALS))

    @classmethod
    def from_csv(cls, suffix_path: Optional[str] = None,
                 directional_path: Optional[str] = None,
                 drop_punctuation: bool = True) -> "NormalizationConfig":
        """Load tables from UTF-8 CSVs with columns variant,canonical.

        Built-in defaults are used for any table not given. Canonical values
        are completed as their own keys.
        """
        suffixes = _load_table(suffix_path) if suffix_path else dict(BUILTIN_SUFFIXES)
        directionals = (_load_table(directional_path) if directional_path
                        else dict(BUILTIN_DIRECTIONALS))
        return cls(suffix_table=suffixes, directional_table=directionals,
                   drop_punctuation=drop_punctuation)

    def __post_init__(self) -> None:
        object.__setattr__(self, "suffix_table", _complete(self.suffix_table))
        object.__setattr__(self, "directional_table", _complete(self.directional_table))


def _load_table(path: str) -> dict[str, str]:
    table: dict[str, str] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["variant", "canonical"]:
            raise AddressError(f"{path}: expected header variant,canonical")
        for row in reader:
            table[row["variant"].upper().strip()] = row["canonical"].upper().strip()
    return table


@dataclass(frozen=True)
class PostalAddress:
    """One parsed address. All text fields are uppercase and trimmed."""

    raw: str
    street_number: str
    street_name: str
    street_suffix: Optional[str] = None
    pre_directional: Optional[str] = None
    post_directional: Optional[str] = None
    unit: Optional[str] = None
    city: Optional[str] = None
    state: Optional[str] = None
    zip5: Optional[str] = None


def normalize_address(raw: str, cfg: Optional[NormalizationConfig] = None) -> PostalAddress:
    """Parse a free-form address string into a canonical PostalAddress.

    Deterministic and idempotent: normalizing the display form of the result
    yields the same fields. Tokens that cannot be classified stay in the
    street name rather than being dropped.

    Raises EmptyAddress for blank input and NoStreetNumber when no leading
    numeric token exists (such records can still match by geocode).
    """
    cfg = cfg or NormalizationConfig.default()
    if raw is None or not raw.strip():
        raise EmptyAddress("blank address")

    text = raw.upper()
    if cfg.drop_punctuation:
        text = _DELETE_RE.sub("", text)
    segments = [s.strip() for s in text.split(",") if s.strip()]
    street_part = segments[0]
    tail_tokens = _tokenize(" ".join(segments[1:]), cfg)

    tokens = _tokenize(street_part, cfg)
    if not tokens:
        raise EmptyAddress("no tokens after cleanup")

    city = state = zip5 = None
    # Tail of the first (or only) segment may still carry "... GA 30312".
    if not tail_tokens:
        tokens, state, zip5 = _pop_state_zip(tokens)
    else:
        tail_tokens, state, zip5 = _pop_state_zip(tail_tokens)
        if tail_tokens:
            city = " ".join(tail_tokens)

    if not tokens or not _NUMBER_RE.match(tokens[0]):
        raise NoStreetNumber(f"no leading street number in {raw!r}")
    street_number = tokens[0]
    tokens = tokens[1:]

    tokens, unit = _pop_unit(tokens)

    post_directional = None
    if len(tokens) > 1 and tokens[-1] in cfg.directional_table:
        post_directional = cfg.directional_table[tokens[-1]]
        tokens = tokens[:-1]
    street_suffix = None
    if len(tokens) > 1 and tokens[-1] in cfg.suffix_table:
        street_suffix = cfg.suffix_table[tokens[-1]]
        tokens = tokens[:-1]
    pre_directional = None
    if len(tokens) > 1 and tokens[0] in cfg.directional_table:
        pre_directional = cfg.directional_table[tokens[0]]
        tokens = tokens[1:]

    # A street whose whole name is a directional ("100 North Ave") gets the
    # canonical spelling so both variants compare equal.
    if len(tokens) == 1 and tokens[0] in cfg.directional_table:
        tokens = [cfg.directional_table[tokens[0]]]

    return PostalAddress(
        raw=raw.strip(),
        street_number=street_number,
        street_name=" ".join(tokens),
        street_suffix=street_suffix,
        pre_directional=pre_directional,
        post_directional=post_directional,
        unit=unit,
        city=city,
        state=state,
        zip5=zip5,
    )


def _tokenize(text: str, cfg: NormalizationConfig) -> list[str]:
    if cfg.drop_punctuation:
        text = _SPACE_RE.sub(" ", text)
    out = []
    for tok in text.split():
        # "#4" carries its own value; split it into the marker and the value.
        if tok.startswith("#") and len(tok) > 1:
            out.append("#")
            out.append(tok[1:])
        else:
            out.append(tok)
    return out


def _pop_state_zip(tokens: list[str]) -> tuple[list[str], Optional[str], Optional[str]]:
    state = zip5 = None
    if tokens:
        m = _ZIP_RE.match(tokens[-1])
        if m:
            zip5 = m.group(1)
            tokens = tokens[:-1]
            if tokens and _STATE_RE.match(tokens[-1]) and tokens[-1] not in BUILTIN_DIRECTIONALS:
                state = tokens[-1]
                tokens = tokens[:-1]
    if state is None and len(tokens) == 1 and _STATE_RE.match(tokens[0]) \
            and tokens[0] not in BUILTIN_DIRECTIONALS:
        state, tokens = tokens[0], []
    return tokens, state, zip5


def _pop_unit(tokens: list[str]) -> tuple[list[str], Optional[str]]:
    for i, tok in enumerate(tokens):
        if i > 0 and tok in UNIT_KEYWORDS:
            value = " ".join(tokens[i + 1:])
            unit = UNIT_KEYWORDS[tok] + (f" {value}" if value else "")
            return tokens[:i], unit
    return tokens, None


def format_address(addr: PostalAddress) -> str:
    """Canonical display form; normalize_address(format_address(a)) == a."""
    street = " ".join(p for p in (
        addr.street_number, addr.pre_directional, addr.street_name,
        addr.street_suffix, addr.post_directional, addr.unit) if p)
    parts = [street]
    if addr.city:
        parts.append(addr.city)
    tail = " ".join(p for p in (addr.state, addr.zip5) if p)
    if tail:
        parts.append(tail)
    return ", ".join(parts)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit-cost insert/delete/substitute."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(prev[j] + 1,          # delete
                           cur[j - 1] + 1,       # insert
                           prev[j - 1] + (ca != cb)))  # substitute
        prev = cur
    return prev[-1]


_FOLD_RE = re.compile(r"[^A-Z0-9\s]")


def fold(s: str) -> str:
    """Uppercase, strip punctuation (deleted, not spaced), collapse whitespace."""
    return " ".join(_FOLD_RE.sub("", s.upper()).split())


def name_similarity(a: str, b: str) -> float:
    """1 - edit_distance/max_len over folded strings; 1.0 when both fold empty."""
    fa, fb = fold(a), fold(b)
    longest = max(len(fa), len(fb))
    if longest == 0:
        return 1.0
    return 1.0 - edit_distance(fa, fb) / longest
