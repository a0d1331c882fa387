import json
import subprocess
import sys

import numpy as np
import pandas as pd
import pytest

from lcsbench.cli import main
from lcsbench.errors import ConfigError
from lcsbench.likelihood import LikelihoodParams
from lcsbench.pipeline import (
    DETECTION_COLUMNS,
    PipelineConfig,
    RunManifest,
    load_config,
    output_digests,
    read_detections,
)


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    from conftest import SMALL_CONFIG

    d = tmp_path_factory.mktemp("run")
    (d / "small.yaml").write_text(SMALL_CONFIG)
    assert main(["run-all", "--config", str(d / "small.yaml"), "--out", str(d / "out")]) == 0
    return d / "out"


class TestConfig:
    def test_defaults(self):
        cfg = PipelineConfig()
        assert cfg.detector.kind == "gru" and cfg.generator.seed == cfg.seed
        assert cfg.likelihood == LikelihoodParams(30, 2, 0.9996)

    def test_seed_override(self, small_config):
        cfg = load_config(small_config, seed=11)
        assert cfg.seed == 11 and cfg.generator.seed == 11 and cfg.train_config.seed == 11

    def test_digest_ignores_out(self, small_config):
        assert load_config(small_config, out="a").digest() == load_config(small_config, out="b").digest()
        assert load_config(small_config).digest() != load_config(small_config, seed=4).digest()

    @pytest.mark.parametrize(
        "text",
        [
            "warp: 9\n",
            "detector: {kind: lstm}\n",
            "aggregation: {on_malformed: maybe}\n",
            "split: {train: '1..0'}\n",
            "likelihood: {long_window: 1}\n",
            "generator: {preset: huge}\n",
        ],
    )
    def test_invalid(self, tmp_path, text):
        p = tmp_path / "c.yaml"
        p.write_text(text)
        with pytest.raises(ConfigError):
            load_config(p)


class TestCli:
    def test_bad_config_exit_code(self, tmp_path):
        p = tmp_path / "c.yaml"
        p.write_text("detector: {kind: lstm}\n")
        assert main(["generate", "--config", str(p), "--out", str(tmp_path / "o")]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["generate", "--config", str(tmp_path / "absent.yaml"), "--out", str(tmp_path / "o")]) == 3

    def test_missing_stage_input(self, tmp_path, small_config):
        assert main(["train", "--config", str(small_config), "--out", str(tmp_path / "o")]) == 3

    def test_bad_range_flag(self, tmp_path, small_config):
        assert main(["aggregate", "--config", str(small_config), "--out", str(tmp_path / "o"), "--range", "x..y"]) == 2

    def test_corrupt_weights(self, tmp_path, small_run):
        import shutil

        out = tmp_path / "o"
        shutil.copytree(small_run, out)
        w = out / "model" / "weights.bin"
        w.write_bytes(w.read_bytes()[:-16])
        cfg = small_run.parent / "small.yaml"
        assert main(["detect", "--config", str(cfg), "--out", str(out)]) == 5

    def test_module_help(self):
        r = subprocess.run([sys.executable, "-m", "lcsbench.cli", "--help"], capture_output=True, text=True)
        assert r.returncode == 0
        for name in ("generate", "aggregate", "train", "detect", "score", "sweep", "run-all"):
            assert name in r.stdout


class TestRunAll:
    def test_layout(self, small_run):
        for rel in (
            "raw/records.csv",
            "ground_truth/anomaly_windows.csv",
            "aggregate/unpivoted.csv",
            "aggregate/pivoted.csv",
            "model/weights.bin",
            "model/scaler.json",
            "model/loss_curve.csv",
            "detect/detections.csv",
            "score/report.json",
            "sweep/sweep.csv",
            "manifest.json",
        ):
            assert (small_run / rel).is_file(), rel

    def test_detections(self, small_run):
        det = read_detections(small_run / "detect" / "detections.csv")
        assert list(det.columns) == DETECTION_COLUMNS
        # only the test day is scored
        assert len(det) == 288 and det.interval_start.min() == 1706659200
        assert det.flag.isin([0, 1]).all()
        assert ((det.likelihood > 0) & (det.likelihood < 1)).all()
        assert det.flag[:29].sum() == 0

    def test_sweep(self, small_run):
        sweep = pd.read_csv(small_run / "sweep" / "sweep.csv")
        assert len(sweep) == 150
        assert len(sweep[["long_window", "short_window", "threshold"]].drop_duplicates()) == 150

    def test_report_matches_detections(self, small_run):
        rep = json.loads((small_run / "score" / "report.json").read_text())
        det = read_detections(small_run / "detect" / "detections.csv")
        assert rep["tp"] + rep["fp"] == int(det.flag.sum())
        assert rep["tp"] + rep["tn"] + rep["fp"] + rep["fn"] == len(det)

    def test_manifest_verifies(self, small_run):
        m = RunManifest.load(small_run / "manifest.json")
        assert m.verify(small_run) == []
        assert set(m.timings) == {"generate", "aggregate", "train", "detect", "score", "sweep"}
        assert m.outputs == output_digests(small_run)

    def test_manifest_detects_tampering(self, small_run, tmp_path):
        import shutil

        out = tmp_path / "o"
        shutil.copytree(small_run, out)
        (out / "score" / "report.csv").write_text("tampered\n")
        assert RunManifest.load(out / "manifest.json").verify(out) == ["score/report.csv"]

    def test_stages_rerun_identically(self, small_run, tmp_path):
        out = tmp_path / "o"
        cfg = str(small_run.parent / "small.yaml")
        for stage in ("generate", "aggregate", "train", "detect", "score", "sweep"):
            assert main([stage, "--config", cfg, "--out", str(out)]) == 0
        assert output_digests(out) == RunManifest.load(small_run / "manifest.json").outputs

    def test_loss_curve(self, small_run):
        curve = pd.read_csv(small_run / "model" / "loss_curve.csv")
        assert list(curve.columns) == ["epoch", "loss"] and len(curve) == 3
        assert np.isfinite(curve.loss).all()
