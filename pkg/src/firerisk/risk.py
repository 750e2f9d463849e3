"""Discrete 1-10 risk scores and low/medium/high categories, plus the
spatial join that attaches scores to the inspection lists.

The probability-to-score mapping is a fixed affine rule (ceil of 10p,
floored at 1); a rank-quantile alternative is available but off by
default. Category cut-points: low = 1, medium = 2-5, high = 6-10.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

from .linkage import LinkConfig, PropertyRecord, Tier, _rank_key, \
    block_candidates, match_pair


class OutOfRange(ValueError):
    pass


class RiskCategory(str, Enum):
    LOW = "LOW"
    MEDIUM = "MEDIUM"
    HIGH = "HIGH"


@dataclass(frozen=True)
class RiskScore:
    property_id: str
    probability: float
    score: int
    category: RiskCategory


def to_score(p: float) -> int:
    """max(1, ceil(10p)): 0 maps to 1, 1.0 maps to 10, monotone throughout."""
    if not (0.0 <= p <= 1.0):
        raise OutOfRange(f"probability {p} outside [0, 1]")
    return max(1, math.ceil(10.0 * p))


def categorize(score: int) -> RiskCategory:
    if not isinstance(score, int) or not (1 <= score <= 10):
        raise OutOfRange(f"score {score} outside 1..10")
    if score == 1:
        return RiskCategory.LOW
    if score <= 5:
        return RiskCategory.MEDIUM
    return RiskCategory.HIGH


def make_risk_score(property_id: str, probability: float) -> RiskScore:
    score = to_score(probability)
    return RiskScore(property_id=property_id, probability=probability,
                     score=score, category=categorize(score))


def quantile_scores(probabilities: Sequence[float]) -> list[int]:
    """Alternative mapping: rank into ten equal-count bins (1..10).

    Ties in probability share a bin so monotonicity holds.
    """
    n = len(probabilities)
    order = sorted(range(n), key=lambda i: (probabilities[i], i))
    scores = [0] * n
    for rank, i in enumerate(order):
        scores[i] = min(10, 1 + (rank * 10) // max(1, n))
    # equal probabilities must not straddle a bin edge
    by_p: dict[float, int] = {}
    for i in order:
        p = probabilities[i]
        by_p[p] = max(by_p.get(p, 0), scores[i])
    return [by_p[probabilities[i]] for i in range(n)]


# Unmatched reasons
NO_CANDIDATES = "NO_CANDIDATES"
NO_MATCH = "NO_MATCH"


@dataclass
class ScoredProperty:
    record: PropertyRecord
    risk: Optional[RiskScore]


def assign_scores(scored: Sequence[RiskScore],
                  model_properties: Sequence[PropertyRecord],
                  inspection_list: Sequence[PropertyRecord],
                  cfg: Optional[LinkConfig] = None,
                  ) -> tuple[list[ScoredProperty], list[tuple[str, str]]]:
    """Attach model scores to an inspection list via the match cascade.

    model_properties are the records the scores were computed for (the
    scores alone carry no coordinates). Each inspection property receives
    at most one score, picked by the usual (tier, similarity, distance)
    ranking; one model property may serve several inspection entries.
    Properties that match nothing are reported with a reason, never
    dropped.
    """
    cfg = cfg or LinkConfig()
    by_id = {s.property_id: s for s in scored}
    scorable = [p for p in model_properties if p.property_id in by_id]

    candidates: dict[str, list] = {}
    blocked: set[str] = set()
    for insp, model_rec in block_candidates(inspection_list, scorable, cfg):
        d = match_pair(insp, model_rec, cfg)
        blocked.add(d.left_id)
        if d.tier != Tier.NO_MATCH:
            candidates.setdefault(d.left_id, []).append(d)

    annotated: list[ScoredProperty] = []
    unmatched: list[tuple[str, str]] = []
    for prop in inspection_list:
        options = candidates.get(prop.property_id)
        if not options:
            annotated.append(ScoredProperty(record=prop, risk=None))
            reason = NO_MATCH if prop.property_id in blocked else NO_CANDIDATES
            unmatched.append((prop.property_id, reason))
            continue
        best = min(options, key=_rank_key)
        annotated.append(ScoredProperty(record=prop, risk=by_id[best.right_id]))
    return annotated, unmatched


def scores_to_csv(scores: Sequence[RiskScore], path: str) -> None:
    import csv
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["propertyId", "probability", "score", "category"])
        for s in sorted(scores, key=lambda s: s.property_id):
            writer.writerow([s.property_id, repr(s.probability), s.score,
                             s.category.value])
