import json
import subprocess
import sys
from pathlib import Path

import pytest

from firerisk.cli import main

BASE_CONFIG = {
    "dataDir": "data",
    "outDir": "out",
    "seed": 7,
    "synth": {
        "nProperties": 120,
        "nFires": 7,
        "windowStart": "2011-01-01",
        "windowEnd": "2015-01-01",
        "corruption": {"typoRate": 0.0, "abbrevRate": 0.0, "jitterMeters": 0.0},
        "signal": {"weights": {"floor_size": 1.6, "number_of_units": 1.2}},
    },
    "trainWindow": {"start": "2011-01-01", "end": "2014-01-01"},
    "testWindow": {"start": "2014-01-01", "end": "2015-01-01"},
    "forestGrid": {"max_depth": [6], "n_trees": [15]},
    "logisticGrid": {"l2": [0.1]},
    "cvFolds": 4,
}


def write_config(tmp_path, **updates):
    doc = json.loads(json.dumps(BASE_CONFIG))
    doc.update(updates)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


class TestFullChain:
    def test_all_stages_produce_artifacts(self, tmp_path, capsys):
        config = write_config(tmp_path)
        assert main(["all", "--config", config]) == 0
        out = tmp_path / "out"
        for artifact in ("rejects.csv", "links.csv", "properties.json",
                         "events.json", "long_list.csv", "short_list.csv",
                         "short_list.geojson", "usage_stats.csv",
                         "model_forest.json", "model_logistic.json",
                         "eval_report.json", "eval_report.csv", "scores.csv",
                         "assigned.csv", "unmatched.csv", "snapshot.geojson"):
            assert (out / artifact).exists(), artifact
        for stage in ("synth", "ingest", "link", "discover", "train",
                      "evaluate", "score", "export-geojson"):
            log = json.loads((out / "logs" / f"{stage}.json").read_text())
            assert log["seed"] == 7
            assert log["configDigest"]
            assert log["outputs"]

    def test_determinism_across_runs(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["all", "--config", config]) == 0
        snap1 = (tmp_path / "out" / "snapshot.geojson").read_bytes()
        eval1 = (tmp_path / "out" / "eval_report.json").read_bytes()
        assert main(["all", "--config", config, "--out", str(tmp_path / "out2")]) == 0
        assert (tmp_path / "out2" / "snapshot.geojson").read_bytes() == snap1
        assert (tmp_path / "out2" / "eval_report.json").read_bytes() == eval1

    def test_evaluate_twice_identical_bytes(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["all", "--config", config]) == 0
        report = tmp_path / "out" / "eval_report.json"
        first = report.read_bytes()
        assert main(["evaluate", "--config", config]) == 0
        assert report.read_bytes() == first


class TestGuards:
    def test_overlapping_windows_exit_2(self, tmp_path):
        config = write_config(
            tmp_path,
            trainWindow={"start": "2011-01-01", "end": "2014-06-01"},
            testWindow={"start": "2014-01-01", "end": "2015-01-01"})
        assert main(["train", "--config", config]) == 2

    def test_bad_config_json_exit_2(self, tmp_path):
        path = tmp_path / "config.json"
        path.write_text("{not json", encoding="utf-8")
        assert main(["synth", "--config", str(path)]) == 2

    def test_missing_upstream_exit_1(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["train", "--config", config]) == 1


class TestEntryPoint:
    def test_subprocess_smoke(self, tmp_path):
        config = write_config(tmp_path)
        proc = subprocess.run(
            [sys.executable, "-m", "firerisk.cli", "synth", "--config", config],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert "synth" in proc.stdout
        assert (tmp_path / "data" / "costar.csv").exists()
        assert (tmp_path / "data" / "ground_truth_links.csv").exists()
        assert (tmp_path / "data" / "ground_truth_fires.csv").exists()

    def test_seed_flag_overrides(self, tmp_path):
        config = write_config(tmp_path)
        assert main(["synth", "--config", config, "--seed", "99"]) == 0
        log = json.loads((tmp_path / "out" / "logs" / "synth.json").read_text())
        assert log["seed"] == 99
