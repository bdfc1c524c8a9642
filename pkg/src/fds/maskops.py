"""Binary-mask morphology and proposal handling.

Covers connected-component analysis, square dilation, de-overlapping of raw
zero-shot proposals into a pairwise-disjoint set, and the RLE proposal file
format.

Proposal file: JSON ``{"height": H, "width": W, "masks": [{"rle": [...],
"confidence": c}, ...]}``. ``rle`` is row-major run-length: alternating run
counts starting with the background run, summing to H*W.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from . import InputError


@dataclass(frozen=True)
class ProposalSet:
    masks: tuple[np.ndarray, ...]
    confidences: tuple[float, ...]
    disjoint: bool = False

    def __post_init__(self):
        for m in self.masks:
            if not m.any():
                raise InputError("ProposalSet may not contain empty masks")
        if len(self.masks) != len(self.confidences):
            raise InputError("mask/confidence count mismatch")


EMPTY_PROPOSALS = ProposalSet((), (), disjoint=True)


@dataclass(frozen=True)
class ComponentSet:
    regions: tuple[np.ndarray, ...]


def connected_components(mask: np.ndarray) -> ComponentSet:
    """Split a mask into its 8-connected components, ordered by each
    component's first pixel in row-major scan order."""
    mask = (mask > 0).astype(np.uint8)
    if not mask.any():
        return ComponentSet(())
    n_labels, labels = cv2.connectedComponents(mask, connectivity=8)
    flat = labels.reshape(-1)
    order = {}
    for label in range(1, n_labels):
        order[label] = int(np.argmax(flat == label))
    regions = tuple(
        (labels == label).astype(np.uint8)
        for label in sorted(order, key=order.get)
    )
    return ComponentSet(regions)


def dilate(mask: np.ndarray, k: int = 21) -> np.ndarray:
    """Dilation by a k x k square structuring element, clipped at the image
    border."""
    if k < 1 or k % 2 == 0:
        raise InputError(f"dilation kernel must be odd and >= 1, got {k}")
    mask = (mask > 0).astype(np.uint8)
    if k == 1:
        return mask
    kernel = np.ones((k, k), dtype=np.uint8)
    return cv2.dilate(mask, kernel)


def deoverlap(raw: list[tuple[np.ndarray, float]]) -> ProposalSet:
    """Resolve pixels claimed by several proposals.

    Each contested pixel goes to the highest-confidence covering mask; ties
    break toward the smaller mask, then input order. Masks emptied by the
    process are dropped. Output union equals input union.
    """
    if not raw:
        return EMPTY_PROPOSALS
    shape = raw[0][0].shape
    for m, _ in raw:
        if m.shape != shape:
            raise InputError(
                f"proposal dimension mismatch: {m.shape} vs {shape}"
            )
    # Priority: confidence desc, area asc, input order asc.
    order = sorted(
        range(len(raw)),
        key=lambda i: (-raw[i][1], int((raw[i][0] > 0).sum()), i),
    )
    claimed = np.zeros(shape, dtype=bool)
    resolved: list[tuple[int, np.ndarray]] = []
    for i in order:
        m = raw[i][0] > 0
        mine = m & ~claimed
        claimed |= m
        if mine.any():
            resolved.append((i, mine.astype(np.uint8)))
    resolved.sort(key=lambda t: t[0])  # keep input order in the output
    return ProposalSet(
        masks=tuple(m for _, m in resolved),
        confidences=tuple(float(raw[i][1]) for i, _ in resolved),
        disjoint=True,
    )


def encode_rle(mask: np.ndarray) -> list[int]:
    """Row-major run-length counts, starting with the background run."""
    flat = (mask.reshape(-1) > 0).astype(np.int8)
    changes = np.nonzero(np.diff(flat))[0] + 1
    bounds = np.concatenate(([0], changes, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0] == 1:
        runs = [0] + runs
    return [int(r) for r in runs]


def decode_rle(rle: list[int], h: int, w: int) -> np.ndarray:
    total = sum(rle)
    if total != h * w:
        raise InputError(f"RLE runs sum to {total}, expected {h * w}")
    if any(r < 0 for r in rle):
        raise InputError("RLE runs must be non-negative")
    flat = np.zeros(h * w, dtype=np.uint8)
    pos, value = 0, 0
    for run in rle:
        if value:
            flat[pos : pos + run] = 1
        pos += run
        value ^= 1
    return flat.reshape(h, w)


def save_proposals(h: int, w: int, masks: list[tuple[np.ndarray, float]],
                   path: Path | str) -> None:
    """Write raw (possibly overlapping) proposals in the RLE file format."""
    doc = {
        "height": h,
        "width": w,
        "masks": [
            {"rle": encode_rle(m), "confidence": float(c)} for m, c in masks
        ],
    }
    Path(path).write_text(json.dumps(doc))


def load_proposals(path: Path | str) -> list[tuple[np.ndarray, float]]:
    """Parse a proposal file into raw (mask, confidence) pairs. The caller
    de-overlaps; files may contain overlapping masks."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: not a valid proposal file: {e}") from e
    try:
        h, w = int(doc["height"]), int(doc["width"])
        entries = doc["masks"]
    except (KeyError, TypeError) as e:
        raise InputError(f"{path}: missing proposal fields: {e}") from e
    out = []
    for i, entry in enumerate(entries):
        conf = float(entry["confidence"])
        if not 0.0 <= conf <= 1.0:
            raise InputError(f"{path}: mask {i} confidence {conf} outside [0,1]")
        try:
            mask = decode_rle(entry["rle"], h, w)
        except InputError as e:
            raise InputError(f"{path}: mask {i}: {e}") from e
        out.append((mask, conf))
    return out
