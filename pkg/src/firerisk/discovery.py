"""Discovery of inspectable properties not on the current inspection list.

City-wide properties whose usage type matches the inspected set form the
long list; restricting to the most frequently inspected usage types gives
the short list an inspector can realistically work through.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .address import fold
from .linkage import LinkConfig, PropertyRecord, Tier, block_candidates, match_pair


@dataclass(frozen=True)
class UsageTypeStats:
    usage_type: str
    inspected_count: int
    city_wide_count: int = 0


@dataclass
class DiscoveryResult:
    long_list: list
    short_list: list
    stats: list


def inspected_usage_types(permits: Iterable) -> list[UsageTypeStats]:
    """Distinct usage types ranked by frequency, ties alphabetical.

    Usage strings compare after case/punctuation folding because permit and
    license datasets disagree on formatting.
    """
    counts: dict[str, int] = {}
    for rec in permits:
        usage = getattr(rec, "usage_type", None)
        if not usage:
            continue
        folded = fold(usage)
        counts[folded] = counts.get(folded, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [UsageTypeStats(usage_type=u, inspected_count=c) for u, c in ranked]


def discover_properties(city_wide: Sequence[PropertyRecord],
                        current_inspections: Sequence[PropertyRecord],
                        criteria: Iterable[str],
                        cfg: Optional[LinkConfig] = None,
                        top_k: int = 100,
                        exclusions: Iterable[str] = ()) -> DiscoveryResult:
    """Long and short candidate lists of new inspectable properties.

    long list: city-wide properties whose usage type is in the criteria,
    minus anything that links (same cascade and config as the linkage
    module) to a current inspection. short list: the long list restricted
    to the top_k usage types by inspected frequency. Vague categories can
    be dropped via the exclusions list.
    """
    cfg = cfg or LinkConfig()
    wanted = {fold(c) for c in criteria} - {fold(e) for e in exclusions}

    typed = [p for p in city_wide
             if p.usage_type and fold(p.usage_type) in wanted]

    linked_ids: set[str] = set()
    for prop, inspection in _matches(typed, current_inspections, cfg):
        linked_ids.add(prop.property_id)
    long_list = [p for p in typed if p.property_id not in linked_ids]

    inspected_stats = inspected_usage_types(current_inspections)
    top_types = {s.usage_type for s in inspected_stats[:top_k]}
    short_list = [p for p in long_list if fold(p.usage_type) in top_types]

    city_counts: dict[str, int] = {}
    for p in city_wide:
        if p.usage_type:
            folded = fold(p.usage_type)
            city_counts[folded] = city_counts.get(folded, 0) + 1
    inspected_counts = {s.usage_type: s.inspected_count for s in inspected_stats}
    stats = [UsageTypeStats(usage_type=u,
                            inspected_count=inspected_counts.get(u, 0),
                            city_wide_count=city_counts.get(u, 0))
             for u in sorted(wanted)]
    stats.sort(key=lambda s: (-s.inspected_count, s.usage_type))
    return DiscoveryResult(long_list=long_list, short_list=short_list, stats=stats)


def _matches(left: Sequence, right: Sequence, cfg: LinkConfig):
    """Every (left, right) pair the cascade links; not one-to-one."""
    for a, b in block_candidates(left, right, cfg):
        if match_pair(a, b, cfg).tier != Tier.NO_MATCH:
            yield a, b
