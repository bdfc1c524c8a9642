import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from fds import InputError
from fds.features import Extractor, ExtractorSpec
from fds.fusion import FusionConfig
from fds.maskops import save_proposals
from fds.pipeline import RunConfig, run_benchmark, run_episode
from fds.report import write_report
from testkit import build_toy_dataset, defect_scene, write_sample


def _fds(*args):
    return subprocess.run(
        [sys.executable, "-m", "fds.cli", *[str(a) for a in args]],
        capture_output=True, text=True,
    )


def _cfg(**kw):
    defaults = dict(
        extractor=ExtractorSpec(kind="avgpool", pool_factor=4),
        fusion=FusionConfig(),
        image_size=64,
    )
    defaults.update(kw)
    return RunConfig(**defaults)


class TestRunEpisode:
    def test_self_matching_pipeline(self, tmp_path, rng):
        img, mask = defect_scene(rng, size=64, noise=10.0)
        write_sample(tmp_path / "p" / "c", "a", img, mask)
        base = tmp_path / "p" / "c"
        cfg = _cfg()
        result = run_episode(
            cfg, Extractor(cfg.extractor),
            [(base / "images" / "a.png", base / "masks" / "a.png")],
            base / "images" / "a.png", base / "masks" / "a.png",
        )
        assert result.iou >= 0.95

    def test_missing_proposals_degrades_to_coarse(self, tmp_path, rng):
        img, mask = defect_scene(rng, size=64)
        write_sample(tmp_path / "p" / "c", "a", img, mask)
        base = tmp_path / "p" / "c"
        cfg = _cfg(proposals_dir=tmp_path / "nonexistent-proposals")
        (tmp_path / "nonexistent-proposals").mkdir()
        result = run_episode(
            cfg, Extractor(cfg.extractor),
            [(base / "images" / "a.png", base / "masks" / "a.png")],
            base / "images" / "a.png", base / "masks" / "a.png",
        )
        assert (result.pred == result.coarse).all()


class TestRunBenchmark:
    def test_perfectly_separable_dataset_scores_one(self, tmp_path):
        build_toy_dataset(tmp_path / "data", {"tile": {"crack": 3},
                                              "grid": {"bent": 3}})
        doc = run_benchmark(_cfg(), tmp_path / "data")
        assert doc["payload"]["miou"] == 1.0
        assert doc["payload"]["mean_fb_iou"] == 1.0

    def test_deterministic_payload(self, tmp_path):
        build_toy_dataset(tmp_path / "data", {"tile": {"crack": 3}})
        a = run_benchmark(_cfg(), tmp_path / "data")
        b = run_benchmark(_cfg(), tmp_path / "data")
        assert json.dumps(a["payload"], sort_keys=True) == json.dumps(
            b["payload"], sort_keys=True
        )

    def test_workers_do_not_change_report(self, tmp_path):
        build_toy_dataset(tmp_path / "data", {"tile": {"crack": 4},
                                              "grid": {"bent": 3}})
        a = run_benchmark(_cfg(workers=1), tmp_path / "data")
        b = run_benchmark(_cfg(workers=4), tmp_path / "data")
        pa, pb = a["payload"], b["payload"]
        pa["config"].pop("workers")
        pb["config"].pop("workers")
        assert json.dumps(pa, sort_keys=True) == json.dumps(pb, sort_keys=True)

    def test_class_filter(self, tmp_path):
        build_toy_dataset(tmp_path / "data", {"tile": {"crack": 3},
                                              "grid": {"bent": 3}})
        doc = run_benchmark(_cfg(), tmp_path / "data", ["tile/crack"])
        assert list(doc["payload"]["per_class_iou"]) == ["tile/crack"]
        with pytest.raises(InputError, match="no classes selected"):
            run_benchmark(_cfg(), tmp_path / "data", ["nope/nope"])

    def test_benchmark_with_proposals(self, tmp_path, rng):
        root = build_toy_dataset(tmp_path / "data", {"tile": {"crack": 3}})
        props_dir = tmp_path / "props"
        props_dir.mkdir()
        # Proposal equal to each ground-truth defect: fusion keeps IoU at 1.
        from fds.dataset import load_mask
        for mask_path in sorted((root / "tile" / "crack" / "masks").iterdir()):
            m = load_mask(mask_path)
            save_proposals(64, 64, [(m, 0.9)], props_dir / (mask_path.stem + ".json"))
        doc = run_benchmark(_cfg(proposals_dir=props_dir), root)
        assert doc["payload"]["miou"] == 1.0


class TestReportFiles:
    def test_report_artifacts_written(self, tmp_path):
        build_toy_dataset(tmp_path / "data", {"tile": {"crack": 3}})
        doc = run_benchmark(_cfg(), tmp_path / "data")
        out = tmp_path / "out"
        write_report(doc, out)
        assert (out / "report.json").exists()
        assert (out / "per_class_iou.csv").exists()
        assert (out / "per_product_fb_iou.csv").exists()
        assert (out / "per_class_iou.png").exists()
        assert (out / "per_product_fb_iou.png").exists()
        loaded = json.loads((out / "report.json").read_text())
        assert loaded["payload"]["miou"] == 1.0
        csv_text = (out / "per_class_iou.csv").read_text()
        assert "tile/crack" in csv_text


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    build_toy_dataset(root / "data", {"tile": {"crack": 3}})
    return root


class TestCliProcess:
    def test_bench_end_to_end(self, dataset, tmp_path):
        out = tmp_path / "out"
        proc = _fds("bench", "--root", dataset / "data", "--avgpool", 4,
                    "--size", 64, "--out", out)
        assert proc.returncode == 0, proc.stderr
        assert "mIoU: 1.0000" in proc.stdout
        assert (out / "report.json").exists()

    def test_run_end_to_end(self, dataset, tmp_path):
        base = dataset / "data" / "tile" / "crack"
        out = tmp_path / "ep"
        proc = _fds("run",
                    "--support-image", base / "images" / "s000.png",
                    "--support-mask", base / "masks" / "s000.png",
                    "--query", base / "images" / "s001.png",
                    "--gt", base / "masks" / "s001.png",
                    "--avgpool", 4, "--size", 64, "--out", out)
        assert proc.returncode == 0, proc.stderr
        assert (out / "s001_overlay.png").exists()
        assert (out / "s001_coarse.png").exists()
        assert (out / "s001_final.png").exists()

    def test_unreadable_model_exits_2(self, dataset, tmp_path):
        proc = _fds("bench", "--root", dataset / "data",
                    "--model", tmp_path / "missing.pgrf",
                    "--out", tmp_path / "o")
        assert proc.returncode == 2
        assert "missing.pgrf" in proc.stderr

    def test_empty_class_filter_exits_2(self, dataset, tmp_path):
        proc = _fds("bench", "--root", dataset / "data", "--avgpool", 4,
                    "--size", 64, "--classes", "no/such",
                    "--out", tmp_path / "o")
        assert proc.returncode == 2
        assert "no classes selected" in proc.stderr

    def test_features_dump_and_info(self, dataset, tmp_path):
        out = tmp_path / "feats"
        proc = _fds("features", "dump",
                    "--images", dataset / "data" / "tile" / "crack" / "images",
                    "--out", out, "--avgpool", 4, "--size", 64)
        assert proc.returncode == 0, proc.stderr
        fmap = out / "s000.fmap"
        assert fmap.exists()
        proc = _fds("features", "info", fmap)
        assert proc.returncode == 0
        info = json.loads(proc.stdout)
        assert (info["height"], info["width"], info["channels"]) == (16, 16, 3)

    def test_proposals_info(self, tmp_path):
        m = np.zeros((8, 8), dtype=np.uint8)
        m[2:4, 2:4] = 1
        path = tmp_path / "p.json"
        save_proposals(8, 8, [(m, 0.7)], path)
        proc = _fds("proposals", "info", path)
        assert proc.returncode == 0
        info = json.loads(proc.stdout)
        assert info["masks"] == 1
        assert info["areas"] == [4]

    def test_bench_with_feature_files(self, dataset, tmp_path):
        feats = tmp_path / "feats"
        proc = _fds("features", "dump",
                    "--images", dataset / "data" / "tile" / "crack" / "images",
                    "--out", feats, "--avgpool", 4, "--size", 64)
        assert proc.returncode == 0, proc.stderr
        proc = _fds("bench", "--root", dataset / "data",
                    "--features-dir", feats, "--size", 64,
                    "--out", tmp_path / "o2")
        assert proc.returncode == 0, proc.stderr
        assert "mIoU: 1.0000" in proc.stdout
