"""Acceptance gate: one test per criterion, each printing a PASS line with
the measured numbers. Heavy corpora are cached at module scope so the
backtest-trend criterion reuses the recovery criterion's data.
"""
import itertools
import json
import time
from datetime import date

import numpy as np
import pytest

from firerisk.cli import main as cli_main
from firerisk.features import (FeatureBuilder, FeatureSchema, TimeWindow,
                               Variable, VariableKind, build_labels,
                               one_hot_expand)
from firerisk.geo import GeoPoint, OverlayKind, point_in_polygon
from firerisk.ingest import Dataset
from firerisk.linkage import LinkConfig, fuse, link_datasets, link_quality
from firerisk.metrics import roc_and_auc, tpr_at_fpr
from firerisk.model import (ForestConfig, TreeParams, predict_proba,
                            train_forest, train_tree, logistic_loss_grad)
from firerisk.risk import categorize, to_score
from firerisk.synth import Corruption, Signal, SynthConfig, synth_generate

from test_metrics import concordance_auc
from test_model import enumerate_best_split


@pytest.fixture(scope="module")
def announce(capsys):
    def _announce(line):
        with capsys.disabled():
            print(line, flush=True)
    return _announce


# pytest forbids function-scoped capsys in a module fixture; route around it
@pytest.fixture()
def report(capsys):
    def _report(name, detail):
        with capsys.disabled():
            print(f"\nACCEPTANCE {name}: PASS ({detail})", flush=True)
    return _report


RECOVERY_SEEDS = (0, 1, 2, 3, 4)
RECOVERY_WEIGHTS = {"floor_size": 1.6, "number_of_units": 1.2}
TEST_WINDOW = TimeWindow(date(2014, 1, 1), date(2015, 1, 1))

_corpora: dict = {}


def recovery_corpus(seed):
    """n=5000 corpus with planted signal; cached across criteria."""
    if seed not in _corpora:
        cfg = SynthConfig(seed=seed, n_properties=5000, n_fires=300,
                          window_start=date(2011, 1, 1),
                          window_end=date(2015, 1, 1),
                          signal=Signal(weights=dict(RECOVERY_WEIGHTS)))
        result = synth_generate(cfg)
        props = [fuse([r]) for r in result.records[Dataset.COSTAR]]
        refs = [r.source_id[3:] for r in result.records[Dataset.COSTAR]]
        matrix = FeatureBuilder(FeatureSchema.default()).fit_transform(props)
        _corpora[seed] = (matrix.values, matrix.column_names, refs,
                          list(result.ground_truth_fires))
    return _corpora[seed]


def train_and_auc(X, names, y_train, y_test, cfg):
    model = train_forest(X, y_train, cfg, names)
    scores = predict_proba(model, X)
    curve, auc = roc_and_auc(scores, y_test)
    return auc, tpr_at_fpr(curve, 0.2)


class TestAucOracle:
    def test_auc_matches_concordance_oracle(self, report):
        start = time.monotonic()
        rng = np.random.default_rng(100)
        worst = 0.0
        checked = 0
        while checked < 100:
            n = int(rng.integers(2, 201))
            if rng.random() < 0.5:
                scores = rng.normal(size=n)
            else:
                scores = rng.choice([0.1, 0.3, 0.5, 0.7, 0.9], size=n)
            labels = rng.integers(0, 2, n)
            if labels.sum() in (0, n):
                continue
            _, auc = roc_and_auc(scores, labels)
            worst = max(worst, abs(auc - concordance_auc(scores, labels)))
            checked += 1
        elapsed = time.monotonic() - start
        assert worst < 1e-9
        assert elapsed < 5.0
        report("auc-oracle", f"100 instances, max |diff| {worst:.2e}, {elapsed:.2f}s")


class TestTreeOracle:
    def test_root_split_matches_enumeration(self, report):
        start = time.monotonic()
        value_patterns = {
            2: [(0, 1), (0, 0)],
            3: [(0, 1, 2), (0, 0, 1), (0, 1, 1), (0, 0, 0)],
            4: [(0, 1, 2, 3), (0, 0, 1, 2), (0, 1, 1, 2), (0, 0, 1, 1),
                (0, 1, 2, 2), (0, 0, 0, 1)],
            5: [(0, 1, 2, 3, 4), (0, 0, 1, 2, 3), (0, 1, 1, 2, 2),
                (0, 0, 1, 1, 2), (0, 1, 2, 3, 3)],
            6: [(0, 1, 2, 3, 4, 5), (0, 0, 1, 1, 2, 2), (0, 1, 2, 2, 3, 4),
                (0, 0, 0, 1, 1, 1)],
        }
        checked = 0
        for n, patterns in value_patterns.items():
            for xs in patterns:
                for labels in itertools.product((0, 1), repeat=n):
                    X = np.array(xs, dtype=float).reshape(-1, 1)
                    y = np.array(labels)
                    root = train_tree(X, y, TreeParams(features_per_split=1),
                                      np.random.default_rng(0))
                    expected = enumerate_best_split(list(map(float, xs)),
                                                    list(labels))
                    if y.sum() in (0, n) or expected is None:
                        assert root.is_leaf, (xs, labels)
                    else:
                        assert root.threshold == expected[1], (xs, labels)
                    checked += 1
        elapsed = time.monotonic() - start
        assert elapsed < 1.0
        report("tree-oracle", f"{checked} datasets, exact match, {elapsed:.2f}s")


class TestLogisticGradient:
    def test_gradient_vs_central_differences(self, report):
        rng = np.random.default_rng(200)
        worst = 0.0
        for _ in range(20):
            n, d = int(rng.integers(4, 30)), int(rng.integers(2, 12))
            X = rng.normal(size=(n, d))
            y = rng.integers(0, 2, n).astype(float)
            w = rng.normal(size=d)
            b = float(rng.normal())
            l2 = float(rng.uniform(0, 1))
            _, gw, gb = logistic_loss_grad(w, b, X, y, l2)
            eps = 1e-6
            for j in range(d):
                wp, wm = w.copy(), w.copy()
                wp[j] += eps
                wm[j] -= eps
                fd = (logistic_loss_grad(wp, b, X, y, l2)[0]
                      - logistic_loss_grad(wm, b, X, y, l2)[0]) / (2 * eps)
                worst = max(worst, abs(fd - gw[j]) / max(1.0, abs(fd)))
            fd_b = (logistic_loss_grad(w, b + eps, X, y, l2)[0]
                    - logistic_loss_grad(w, b - eps, X, y, l2)[0]) / (2 * eps)
            worst = max(worst, abs(fd_b - gb) / max(1.0, abs(fd_b)))
        assert worst < 1e-5
        report("logistic-gradient", f"20 instances, max rel err {worst:.2e}")


class TestFeatureExpansion:
    def test_width_identity_and_zip_rules(self, report):
        variables = [Variable("zip", VariableKind.CATEGORICAL),
                     Variable("nbhd", VariableKind.CATEGORICAL)]
        variables += [Variable(f"n{i}", VariableKind.NUMERIC) for i in range(20)]
        variables += [Variable(f"b{i}", VariableKind.BINARY) for i in range(5)]
        schema = FeatureSchema(variables=tuple(variables))

        from firerisk.linkage import PropertyRecord
        records = []
        for i in range(300):
            attrs = {f"n{j}": float(i * j) for j in range(20)}
            attrs.update({f"b{j}": (i + j) % 2 for j in range(5)})
            attrs["zip"] = f"303{i % 37:02d}"
            attrs["nbhd"] = f"NB{i % 8}"
            records.append(PropertyRecord(property_id=f"p{i}", attributes=attrs))
        matrix = FeatureBuilder(schema).fit_transform(records)
        assert len(matrix.column_names) == 37 + 8 + 40 + 5 == 90
        assert matrix.values.shape == (300, 90)

        # zip rules: 37 observed zips -> 37 columns; missing and unseen -> all zeros
        zips = sorted({f"303{i:02d}" for i in range(37)})
        block = one_hot_expand([f"30300", None, "99999"], zips)
        assert block.shape == (3, 37)
        assert block[0].sum() == 1.0
        assert block[1].sum() == 0.0
        assert block[2].sum() == 0.0
        report("feature-expansion", "37+8+2*20+5 = 90 columns; zip rules exact")


class TestSyntheticSignalRecovery:
    def test_recovery(self, report):
        start = time.monotonic()
        train_w = TimeWindow(date(2011, 1, 1), date(2014, 1, 1))
        aucs, tprs, controls = [], [], []
        for seed in RECOVERY_SEEDS:
            X, names, refs, fires = recovery_corpus(seed)
            y_train = build_labels(fires, refs, train_w)
            y_test = build_labels(fires, refs, TEST_WINDOW)
            auc, tpr = train_and_auc(
                X, names, y_train, y_test,
                ForestConfig(n_trees=200, max_depth=10, min_samples_split=20,
                             seed=seed))
            aucs.append(auc)
            tprs.append(tpr)
            rng = np.random.default_rng(seed + 5000)
            y_shuffled = rng.permutation(y_train)
            control, _ = train_and_auc(
                X, names, y_shuffled, y_test,
                ForestConfig(n_trees=50, max_depth=10, min_samples_split=20,
                             seed=seed))
            controls.append(control)
        elapsed = time.monotonic() - start
        med_auc = float(np.median(aucs))
        med_tpr = float(np.median(tprs))
        med_control = float(np.median(controls))
        assert med_auc >= 0.80, aucs
        assert med_tpr >= 0.55, tprs
        assert 0.4 <= med_control <= 0.6, controls
        assert elapsed < 60.0
        report("synthetic-signal-recovery",
               f"median AUC {med_auc:.4f} (>=0.80), median TPR@0.2 {med_tpr:.4f} "
               f"(>=0.55), shuffle control {med_control:.4f}, {elapsed:.1f}s")


class TestBacktestTrend:
    def test_median_auc_nondecreasing_with_window(self, report):
        by_window = {1: [], 2: [], 3: []}
        for seed in RECOVERY_SEEDS:
            X, names, refs, fires = recovery_corpus(seed)
            y_test = build_labels(fires, refs, TEST_WINDOW)
            for years in (1, 2, 3):
                train_w = TimeWindow(date(2014 - years, 1, 1), date(2014, 1, 1))
                y_train = build_labels(fires, refs, train_w)
                auc, _ = train_and_auc(
                    X, names, y_train, y_test,
                    ForestConfig(n_trees=100, max_depth=10,
                                 min_samples_split=20, seed=seed))
                by_window[years].append(auc)
        medians = [float(np.median(by_window[k])) for k in (1, 2, 3)]
        assert medians[0] <= medians[1] <= medians[2], by_window
        report("backtest-trend",
               "median AUC by train years "
               + " <= ".join(f"{m:.4f}" for m in medians))


class TestLinkageQuality:
    def run_linkage(self, corruption):
        cfg = SynthConfig(seed=77, n_properties=1000, n_fires=60,
                          window_start=date(2011, 1, 1),
                          window_end=date(2015, 1, 1), corruption=corruption)
        result = synth_generate(cfg)
        predicted = []
        datasets = (Dataset.COSTAR, Dataset.PARCEL, Dataset.BUSINESS_LICENSE)
        for i, lds in enumerate(datasets):
            for rds in datasets[i + 1:]:
                links = link_datasets(result.records[lds], result.records[rds],
                                      LinkConfig())
                predicted += [(d.left_id, d.right_id) for d in links]
        return link_quality(predicted, result.ground_truth_links)

    def test_linkage_quality(self, report):
        start = time.monotonic()
        precision, recall = self.run_linkage(
            Corruption(typo_rate=0.1, abbrev_rate=0.3, jitter_meters=25.0))
        assert precision >= 0.99
        assert recall >= 0.95
        p0, r0 = self.run_linkage(Corruption())
        assert p0 == 1.0 and r0 == 1.0
        elapsed = time.monotonic() - start
        assert elapsed < 30.0
        report("linkage-quality",
               f"corrupted P {precision:.4f} R {recall:.4f}; "
               f"clean P {p0:.1f} R {r0:.1f}; {elapsed:.1f}s")


class TestDiscoverySemantics:
    def test_motor_vehicle_fixture(self, report):
        from firerisk.address import normalize_address
        from firerisk.discovery import discover_properties
        from firerisk.linkage import PropertyRecord

        def prop(pid, i):
            return PropertyRecord(
                property_id=pid,
                canonical_address=normalize_address(
                    f"{100 + 2 * i} COMMERCE ST, ATLANTA, GA 30303"),
                point=GeoPoint(33.60 + i * 6e-4, -84.40),
                business_name=f"GARAGE {i:04d} LLC",
                usage_type="MOTOR VEHICLE REPAIR")

        city = [prop(f"c{i}", i) for i in range(507)]
        current = [prop(f"c{i}", i) for i in range(186)]
        result = discover_properties(city, current,
                                     criteria={"MOTOR VEHICLE REPAIR"})
        assert len(result.long_list) == 321
        short_ids = {p.property_id for p in result.short_list}
        long_ids = {p.property_id for p in result.long_list}
        assert short_ids <= long_ids
        assert long_ids & {p.property_id for p in current} == set()
        report("discovery-semantics",
               f"507 city-wide, 186 inspected -> {len(result.long_list)} new; "
               "short subset of long; dedup exact")


class TestRiskBinning:
    def test_sweep_and_monotonicity(self, report):
        expected = {0: 1}
        for k in range(21):
            p = k / 20  # exact intent of the 0.05 grid
            score = to_score(p)
            assert 1 <= score <= 10
            # cut-points: low = 1, medium = 2..5, high = 6..10
            category = categorize(score)
            if score == 1:
                assert category.value == "LOW"
            elif score <= 5:
                assert category.value == "MEDIUM"
            else:
                assert category.value == "HIGH"
            import math
            assert score == max(1, math.ceil(10 * p))
        rng = np.random.default_rng(300)
        pairs = rng.uniform(0, 1, size=(10_000, 2))
        for a, b in pairs:
            lo, hi = sorted((float(a), float(b)))
            assert to_score(lo) <= to_score(hi)
        report("risk-binning",
               "p sweep 0..1 matches ceil(10p) bins; 10,000 monotone pairs")


class TestEndToEndDeterminism:
    def test_cli_chain_byte_identical(self, tmp_path, report):
        config = {
            "dataDir": str(tmp_path / "data"), "outDir": str(tmp_path / "out1"),
            "seed": 13,
            "synth": {"nProperties": 150, "nFires": 9,
                      "windowStart": "2011-01-01", "windowEnd": "2015-01-01",
                      "corruption": {"typoRate": 0.05, "abbrevRate": 0.2,
                                     "jitterMeters": 10},
                      "signal": {"weights": {"floor_size": 1.6,
                                             "number_of_units": 1.2}}},
            "trainWindow": {"start": "2011-01-01", "end": "2014-01-01"},
            "testWindow": {"start": "2014-01-01", "end": "2015-01-01"},
            "forestGrid": {"max_depth": [6], "n_trees": [15]},
            "logisticGrid": {"l2": [0.1]},
            "cvFolds": 4,
        }
        path = tmp_path / "config.json"
        path.write_text(json.dumps(config), encoding="utf-8")
        assert cli_main(["all", "--config", str(path)]) == 0
        snap1 = (tmp_path / "out1" / "snapshot.geojson").read_bytes()
        eval1 = (tmp_path / "out1" / "eval_report.json").read_bytes()
        assert cli_main(["all", "--config", str(path),
                         "--out", str(tmp_path / "out2")]) == 0
        snap2 = (tmp_path / "out2" / "snapshot.geojson").read_bytes()
        eval2 = (tmp_path / "out2" / "eval_report.json").read_bytes()
        assert snap1 == snap2
        assert eval1 == eval2
        report("end-to-end-determinism",
               f"snapshot {len(snap1)} bytes and eval report {len(eval1)} bytes "
               "identical across runs")


class TestServiceCorrectness:
    @staticmethod
    def brute_filter(features, q):
        """Plain-python re-statement of the conjunctive filter contract."""
        from firerisk.address import fold
        out = []
        for f in features:
            if q.layer is not None and f.layer != q.layer:
                continue
            if q.usage_type is not None and (
                    f.usage_type is None or fold(f.usage_type) != fold(q.usage_type)):
                continue
            if q.date_from is not None and (f.date is None or f.date < q.date_from):
                continue
            if q.date_to is not None and (f.date is None or f.date > q.date_to):
                continue
            if q.risk_min is not None and (f.risk_score is None
                                           or f.risk_score < q.risk_min):
                continue
            if q.risk_max is not None and (f.risk_score is None
                                           or f.risk_score > q.risk_max):
                continue
            if q.bbox is not None:
                if not (q.bbox[0] <= f.point.lon <= q.bbox[2]
                        and q.bbox[1] <= f.point.lat <= q.bbox[3]):
                    continue
            out.append(f)
        return sorted(out, key=lambda f: f.property_id)

    def test_service_vs_brute_force(self, tmp_path, report):
        from fastapi.testclient import TestClient
        from firerisk.service import (Layer, PropertyQuery, SnapshotFeature,
                                      build_snapshot, create_app,
                                      overlay_stats, write_snapshot)
        from firerisk.synth import make_overlays

        rng = np.random.default_rng(400)
        layers = list(Layer)
        usages = ["RESTAURANT", "DAY CARE", "WAREHOUSE", None]
        features = []
        for i in range(50):
            layer = layers[int(rng.integers(0, 3))]
            when = (date(2012, 1, 1).toordinal()
                    + int(rng.integers(0, 1000)))
            score = int(rng.integers(1, 11)) if rng.random() < 0.7 else None
            features.append(SnapshotFeature(
                property_id=f"p{i:03d}", layer=layer,
                point=GeoPoint(33.63 + float(rng.random()) * 0.26,
                               -84.55 + float(rng.random()) * 0.26),
                business_name=f"BIZ {i}", address=f"{i} MAIN ST",
                usage_type=usages[int(rng.integers(0, 4))],
                date=date.fromordinal(when) if layer != Layer.POTENTIAL_INSPECTION else None,
                risk_score=score,
                risk_category=None if score is None else categorize(score).value,
                risk_probability=None if score is None else score / 10))
        overlays = {"npu": make_overlays()[OverlayKind.NPU]}
        snapshot = build_snapshot(features, overlays)
        snap_path = tmp_path / "snap.geojson"
        write_snapshot(snapshot, str(snap_path))
        client = TestClient(create_app(str(snap_path)))

        checked = 0
        for _ in range(20):
            params = {}
            q_kwargs = {}
            if rng.random() < 0.5:
                layer = layers[int(rng.integers(0, 3))]
                params["layer"] = layer.value
                q_kwargs["layer"] = layer
            if rng.random() < 0.5:
                usage = usages[int(rng.integers(0, 3))]
                params["usage"] = usage
                q_kwargs["usage_type"] = usage
            if rng.random() < 0.4:
                d = date.fromordinal(date(2012, 1, 1).toordinal()
                                     + int(rng.integers(0, 900)))
                params["from"] = d.isoformat()
                q_kwargs["date_from"] = d
            if rng.random() < 0.4:
                lo = int(rng.integers(1, 8))
                params["risk_min"] = str(lo)
                q_kwargs["risk_min"] = lo
            query = PropertyQuery(**q_kwargs)
            expected = self.brute_filter(snapshot.features, query)
            doc = client.get("/api/properties", params=params).json()
            assert [f["id"] for f in doc["features"]] == \
                [f.property_id for f in expected]

            overlay = snapshot.overlays["npu"][int(rng.integers(0, 9))]
            stats = client.get(f"/api/overlays/npu/{overlay.id}/stats",
                               params=params).json()
            for layer_enum in Layer:
                in_poly = [f for f in expected if f.layer == layer_enum
                           and point_in_polygon(f.point, overlay)]
                total = sum(1 for f in expected if f.layer == layer_enum)
                cell = stats["layers"][layer_enum.value]
                assert cell["count"] == len(in_poly)
                assert cell["filteredTotal"] == total
                want_pct = 100.0 * len(in_poly) / total if total else 0.0
                assert cell["percentage"] == want_pct
            checked += 1

        assert client.get("/api/properties", params={"from": "x"}).status_code == 400
        assert client.get("/api/properties", params={"risk_min": "99"}).status_code == 400
        assert client.get("/api/properties",
                          params={"bbox": "1,2,3"}).status_code == 400
        report("service-correctness",
               f"{checked} random queries match brute force; malformed -> 400")
