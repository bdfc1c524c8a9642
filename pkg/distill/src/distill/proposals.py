"""Zero-shot proposal dumping in the engine's RLE file format.

The default backend is graph-based color segmentation (felzenszwalb) run at
two scales, which needs no weights and works offline; segments are scored by
color homogeneity, filtered by a confidence floor, and deduplicated with an
IoU threshold, mirroring the `iou`/`confidence` knobs of the usual zero-shot
segmenters. Masks may overlap across scales; the engine de-overlaps.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path

import cv2
import numpy as np
from skimage.segmentation import felzenszwalb

from . import DistillError
from .train import IMAGE_EXTS, list_images

log = logging.getLogger("distill")

SCALES = (100, 300)


def encode_rle(mask: np.ndarray) -> list[int]:
    """Row-major run counts, background run first."""
    flat = (mask.reshape(-1) > 0).astype(np.uint8)
    runs = []
    current, count = 0, 0
    for v in flat:
        if v == current:
            count += 1
        else:
            runs.append(count)
            current, count = v, 1
    runs.append(count)
    return runs


def propose(img: np.ndarray, iou_thresh: float, conf_thresh: float
            ) -> list[tuple[np.ndarray, float]]:
    """Class-agnostic region proposals with confidences in [0,1]."""
    h, w = img.shape[:2]
    candidates: list[tuple[np.ndarray, float]] = []
    for scale in SCALES:
        labels = felzenszwalb(img, scale=scale, sigma=0.8, min_size=max(9, h * w // 512))
        for label in np.unique(labels):
            m = (labels == label).astype(np.uint8)
            std = float(img[m > 0].std())
            conf = float(np.exp(-std / 64.0))
            if conf >= conf_thresh:
                candidates.append((m, conf))
    candidates.sort(key=lambda t: -t[1])
    kept: list[tuple[np.ndarray, float]] = []
    for m, c in candidates:
        area = int(m.sum())
        dup = False
        for km, _ in kept:
            inter = int((m & km).sum())
            union = area + int(km.sum()) - inter
            if inter / union > iou_thresh:
                dup = True
                break
        if not dup:
            kept.append((m, c))
    return kept


def dump_proposals(
    image_dir: Path,
    out_dir: Path,
    iou_thresh: float = 0.5,
    conf_thresh: float = 0.1,
) -> int:
    """One proposal file per image; returns the number written. Unreadable
    images are skipped with a warning; raises if every image fails."""
    paths = list_images(image_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = 0
    for p in paths:
        img = cv2.imread(str(p), cv2.IMREAD_COLOR)
        if img is None:
            log.warning("skipping unreadable image %s", p)
            continue
        img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
        masks = propose(img, iou_thresh, conf_thresh)
        h, w = img.shape[:2]
        doc = {
            "height": h,
            "width": w,
            "masks": [
                {"rle": encode_rle(m), "confidence": c} for m, c in masks
            ],
        }
        (out_dir / (p.stem + ".json")).write_text(json.dumps(doc))
        written += 1
    if written == 0:
        raise DistillError(f"no image in {image_dir} could be processed")
    return written
