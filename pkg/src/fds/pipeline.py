"""End-to-end episode evaluation and benchmark runs."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np

from . import InputError, __version__
from . import dataset as ds
from .features import Extractor, ExtractorSpec
from .fusion import FusionConfig, FusionResult, fuse
from .maskops import EMPTY_PROPOSALS, ProposalSet, deoverlap, load_proposals
from .matching import build_prototypes, decide_mask, similarity_maps
from .metrics import MetricLedger, iou, report

log = logging.getLogger("fds")


@dataclass(frozen=True)
class RunConfig:
    extractor: ExtractorSpec
    fusion: FusionConfig = field(default_factory=FusionConfig)
    shots: int = 1
    image_size: int = 256
    patch: int = 3
    fg_strategy: str = "patch"
    bg_strategy: str = "dense"
    proposals_dir: Path | None = None
    workers: int = 1

    def echo(self) -> dict:
        """Configuration echo embedded in reports (deterministic)."""
        return {
            "tau1": self.fusion.tau1,
            "tau2": self.fusion.tau2,
            "dilation_k": self.fusion.dilation_k,
            "patch_size": self.patch,
            "fusion_strategy": self.fusion.strategy,
            "fg_strategy": self.fg_strategy,
            "bg_strategy": self.bg_strategy,
            "shots": self.shots,
            "image_size": self.image_size,
            "extractor": self.extractor.kind,
            "workers": self.workers,
        }


@dataclass
class EpisodeResult:
    coarse: np.ndarray
    fused: FusionResult
    pred: np.ndarray
    gt: np.ndarray
    iou: float
    elapsed_s: float


def proposals_for(cfg: RunConfig, query_image: Path) -> ProposalSet:
    """Proposal file matched by query stem; missing file means an empty set
    (logged), so runs degrade to pure feature matching."""
    if cfg.proposals_dir is None:
        return EMPTY_PROPOSALS
    path = Path(cfg.proposals_dir) / (Path(query_image).stem + ".json")
    if not path.exists():
        log.warning("no proposal file for %s, using empty set", query_image)
        return EMPTY_PROPOSALS
    return deoverlap(load_proposals(path))


def run_episode(
    cfg: RunConfig,
    extractor: Extractor,
    supports: list[tuple[Path, Path]],
    query_image: Path,
    query_gt: Path | None = None,
    proposals: ProposalSet | None = None,
) -> EpisodeResult:
    """Segment one query from its supports and score it when ground truth is
    available."""
    t0 = time.perf_counter()
    side = cfg.image_size
    shots = []
    for img_path, mask_path in supports:
        img = ds.resize_image(ds.load_image(img_path), side)
        mask = ds.load_mask(mask_path)
        if not mask.any():
            raise InputError(f"support mask {mask_path} has no foreground")
        mask = ds.resize_mask(mask, side)
        feats = extractor.extract(img, img_path)
        shots.append((feats, ds.downsample_mask(mask, feats.shape[0], feats.shape[1])))

    q_img = ds.resize_image(ds.load_image(query_image), side)
    q_feats = extractor.extract(q_img, query_image)

    protos = build_prototypes(shots, cfg.fg_strategy, cfg.bg_strategy, cfg.patch)
    sims = similarity_maps(q_feats, protos)
    coarse = decide_mask(sims, side, side)

    if proposals is None:
        proposals = proposals_for(cfg, query_image)
    fused = fuse(coarse, proposals, cfg.fusion)

    gt = np.zeros_like(coarse)
    score = float("nan")
    if query_gt is not None:
        gt = ds.resize_mask(ds.load_mask(query_gt), side)
        score = iou(fused.mask, gt)
    return EpisodeResult(
        coarse=coarse,
        fused=fused,
        pred=fused.mask,
        gt=gt,
        iou=score,
        elapsed_s=time.perf_counter() - t0,
    )


def write_episode_artifacts(
    result: EpisodeResult, query_image: Path, out_dir: Path, size: int
) -> None:
    """Overlay (red = predicted foreground) plus raw coarse/final masks."""
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(query_image).stem
    img = ds.resize_image(ds.load_image(query_image), size)
    overlay = img.copy()
    sel = result.pred > 0
    overlay[sel] = (0.5 * overlay[sel] + 0.5 * np.array([255, 0, 0])).astype(np.uint8)
    cv2.imwrite(str(out_dir / f"{stem}_overlay.png"),
                cv2.cvtColor(overlay, cv2.COLOR_RGB2BGR))
    cv2.imwrite(str(out_dir / f"{stem}_coarse.png"), result.coarse * 255)
    cv2.imwrite(str(out_dir / f"{stem}_final.png"), result.pred * 255)
    record = {
        "query": str(query_image),
        "iou": None if np.isnan(result.iou) else result.iou,
        "elapsed_s": result.elapsed_s,
    }
    (out_dir / f"{stem}_episode.json").write_text(json.dumps(record, indent=2))


def select_classes(
    index: ds.DatasetIndex, class_filter: list[str] | None
) -> list[tuple[str, str]]:
    all_ids = index.class_ids()
    if not class_filter:
        return all_ids
    wanted = set(class_filter)
    selected = [cid for cid in all_ids if f"{cid[0]}/{cid[1]}" in wanted]
    if not selected:
        raise InputError(f"no classes selected by filter {sorted(wanted)}")
    return selected


def run_benchmark(
    cfg: RunConfig,
    root: Path,
    class_filter: list[str] | None = None,
    pooled_fb: bool = False,
) -> dict:
    """Evaluate every episode of the selected classes and assemble the
    report document.

    The ``payload`` subtree is byte-deterministic for identical inputs and
    config; wall-clock data lives under ``run_info``.
    """
    index = ds.scan_dataset(root)
    class_ids = select_classes(index, class_filter)
    episodes: list[ds.Episode] = []
    for product, cls in class_ids:
        episodes.extend(ds.build_episodes(index, product, cls, cfg.shots))
    if not episodes:
        raise InputError("no episodes selected")

    extractor = Extractor(cfg.extractor)

    def evaluate(ep: ds.Episode) -> EpisodeResult:
        return run_episode(
            cfg,
            extractor,
            [(s.image, s.mask) for s in ep.supports],
            ep.query.image,
            ep.query.mask,
        )

    t0 = time.perf_counter()
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(evaluate, episodes))
    else:
        results = [evaluate(ep) for ep in episodes]
    total_s = time.perf_counter() - t0

    ledger = MetricLedger()
    per_episode = []
    for ep, res in zip(episodes, results):
        ledger.accumulate(ep.product, ep.defect_class, res.pred, res.gt)
        per_episode.append(
            {
                "class": f"{ep.product}/{ep.defect_class}",
                "query": ep.query.image.name,
                "iou": res.iou,
            }
        )
    summary = report(ledger, pooled_fb=pooled_fb)

    times = [r.elapsed_s for r in results]
    return {
        "payload": {
            "engine_version": __version__,
            "config": cfg.echo(),
            "classes": [f"{p}/{c}" for p, c in class_ids],
            "episodes": per_episode,
            **summary,
        },
        "run_info": {
            "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
            "total_s": total_s,
            "episode_time_mean_s": float(np.mean(times)),
            "episode_time_max_s": float(np.max(times)),
        },
    }
