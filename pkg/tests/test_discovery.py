import pytest

from firerisk.discovery import (DiscoveryResult, discover_properties,
                                inspected_usage_types)
from firerisk.geo import GeoPoint
from firerisk.ingest import Dataset
from firerisk.linkage import LinkConfig, PropertyRecord
from firerisk.address import normalize_address


def prop(pid, usage, street_number, name=None):
    # 6e-4 deg per numbering step keeps distinct properties ~130 m apart,
    # outside the 50 m geo-fuzzy radius
    return PropertyRecord(
        property_id=pid,
        canonical_address=normalize_address(
            f"{street_number} TRADE ST, ATLANTA, GA 30303"),
        point=GeoPoint(33.60 + street_number * 6e-4, -84.40),
        business_name=name or f"BIZ {pid}",
        usage_type=usage)


class Permit:
    def __init__(self, usage_type):
        self.usage_type = usage_type


class TestInspectedUsageTypes:
    def test_empty(self):
        assert inspected_usage_types([]) == []

    def test_counts_and_ties(self):
        stats = inspected_usage_types([Permit("A"), Permit("a"), Permit("B")])
        assert [(s.usage_type, s.inspected_count) for s in stats] == \
            [("A", 2), ("B", 1)]

    def test_tie_alphabetical(self):
        stats = inspected_usage_types([Permit("ZULU"), Permit("ALPHA")])
        assert [s.usage_type for s in stats] == ["ALPHA", "ZULU"]

    def test_motor_vehicle_repair_count(self):
        permits = [Permit("Motor Vehicle Repair")] * 186 + [Permit("RESTAURANT")] * 20
        stats = inspected_usage_types(permits)
        assert stats[0].usage_type == "MOTOR VEHICLE REPAIR"
        assert stats[0].inspected_count == 186


class TestDiscoverProperties:
    def test_no_matching_criteria(self):
        city = [prop("c1", "RESTAURANT", 100)]
        result = discover_properties(city, [], criteria={"DAY CARE"})
        assert result.long_list == [] and result.short_list == []

    def test_motor_vehicle_example(self):
        # 507 city-wide repair facilities, 186 already inspected -> 321 new
        city = [prop(f"c{i}", "MOTOR VEHICLE REPAIR", 100 + 2 * i)
                for i in range(507)]
        current = [prop(f"c{i}", "MOTOR VEHICLE REPAIR", 100 + 2 * i)
                   for i in range(186)]  # same addresses -> they link
        result = discover_properties(city, current,
                                     criteria={"MOTOR VEHICLE REPAIR"})
        assert len(result.long_list) == 321
        assert {p.property_id for p in result.long_list} == \
            {f"c{i}" for i in range(186, 507)}
        assert set(p.property_id for p in result.short_list) <= \
            set(p.property_id for p in result.long_list)
        stat = result.stats[0]
        assert stat.usage_type == "MOTOR VEHICLE REPAIR"
        assert stat.inspected_count == 186
        assert stat.city_wide_count == 507

    def test_dedup_exact_on_clean_data(self):
        city = [prop(f"c{i}", "RESTAURANT", 100 + 2 * i) for i in range(40)]
        current = [prop(f"c{i}", "RESTAURANT", 100 + 2 * i) for i in range(15)]
        result = discover_properties(city, current, criteria={"RESTAURANT"})
        long_ids = {p.property_id for p in result.long_list}
        assert long_ids == {f"c{i}" for i in range(15, 40)}
        assert long_ids & {p.property_id for p in current} == set()

    def test_shorter_criteria_never_grow_long_list(self):
        city = [prop(f"c{i}", usage, 100 + 2 * i)
                for i, usage in enumerate(["RESTAURANT", "DAY CARE", "SCHOOL"] * 10)]
        full = discover_properties(city, [], criteria={"RESTAURANT", "DAY CARE", "SCHOOL"})
        fewer = discover_properties(city, [], criteria={"RESTAURANT", "DAY CARE"})
        assert len(fewer.long_list) <= len(full.long_list)
        assert {p.property_id for p in fewer.long_list} <= \
            {p.property_id for p in full.long_list}

    def test_short_list_restricted_to_top_k(self):
        city = [prop(f"r{i}", "RESTAURANT", 100 + 2 * i) for i in range(6)]
        city += [prop(f"d{i}", "DAY CARE", 400 + 2 * i) for i in range(6)]
        # rankings come from inspected properties elsewhere in town
        current = [prop(f"ir{i}", "RESTAURANT", 900 + 2 * i) for i in range(5)]
        current += [prop("id0", "DAY CARE", 1500)]
        result = discover_properties(city, current,
                                     criteria={"RESTAURANT", "DAY CARE"},
                                     top_k=1)
        assert {p.usage_type for p in result.short_list} == {"RESTAURANT"}
        assert {p.usage_type for p in result.long_list} == \
            {"RESTAURANT", "DAY CARE"}

    def test_exclusions_drop_vague_categories(self):
        city = [prop("c1", "MISCELLANEOUS BUSINESS SERVICE", 100),
                prop("c2", "RESTAURANT", 102)]
        result = discover_properties(
            city, [], criteria={"MISCELLANEOUS BUSINESS SERVICE", "RESTAURANT"},
            exclusions=("MISCELLANEOUS BUSINESS SERVICE",))
        assert [p.property_id for p in result.long_list] == ["c2"]

    def test_usage_fold_insensitive(self):
        city = [prop("c1", "Motor Vehicle Repair", 100)]
        result = discover_properties(city, [], criteria={"MOTOR VEHICLE REPAIR"})
        assert len(result.long_list) == 1
