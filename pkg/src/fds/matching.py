"""Prototype construction and cosine feature matching.

Support features are split by the downsampled support mask into foreground
and background vector sets, aggregated into prototypes per a configurable
strategy, and matched against every query feature cell by max-reduced cosine
similarity. The per-cell argmax over the two similarity maps, upsampled to
image resolution, is the coarse segmentation.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np

from . import InputError

EPS = 1e-8

STRATEGIES = ("dense", "patch", "pool")


@dataclass(frozen=True)
class PrototypeSet:
    foreground: np.ndarray  # (n_f, C')
    background: np.ndarray  # (n_b, C')
    fg_strategy: str
    bg_strategy: str


@dataclass(frozen=True)
class SimilarityMaps:
    fg: np.ndarray  # (H', W') in [-1, 1]
    bg: np.ndarray


def partition_support(
    features: np.ndarray, mask: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Split feature vectors into foreground (mask > 0) and background sets."""
    if features.shape[:2] != mask.shape:
        raise InputError(
            f"mask shape {mask.shape} does not match feature grid "
            f"{features.shape[:2]}"
        )
    fg_sel = mask > 0
    if not fg_sel.any():
        raise InputError("support mask has no foreground cells")
    if fg_sel.all():
        raise InputError("no background prototypes available: mask is all foreground")
    vecs = features.reshape(-1, features.shape[2])
    flat = fg_sel.reshape(-1)
    return vecs[flat], vecs[~flat]


def _patch_average(features: np.ndarray, select: np.ndarray, patch: int) -> np.ndarray:
    """For each selected cell, mean of feature vectors over its patch x patch
    neighborhood intersected with the selected set. Keeps one vector per
    selected cell."""
    h, w, c = features.shape
    r = patch // 2
    sel = select.astype(np.float32)
    masked = features * sel[:, :, None]
    # Box sums over the neighborhood via padded cumulative sums.
    kernel = np.ones((patch, patch), dtype=np.float32)
    sums = cv2.filter2D(masked, -1, kernel, borderType=cv2.BORDER_CONSTANT)
    counts = cv2.filter2D(sel, -1, kernel, borderType=cv2.BORDER_CONSTANT)
    ys, xs = np.nonzero(select)
    out = sums[ys, xs] / counts[ys, xs][:, None]
    return out.astype(np.float32)


def _apply_strategy(
    per_shot: list[tuple[np.ndarray, np.ndarray]],
    foreground: bool,
    strategy: str,
    patch: int,
) -> np.ndarray:
    """per_shot holds (features, mask) pairs; returns the (n, C') prototype
    matrix for the requested side."""
    if strategy not in STRATEGIES:
        raise InputError(f"unknown prototype strategy: {strategy}")
    chunks = []
    for features, mask in per_shot:
        select = (mask > 0) if foreground else (mask == 0)
        if strategy == "patch":
            chunks.append(_patch_average(features, select, patch))
        else:
            vecs = features.reshape(-1, features.shape[2])
            chunks.append(vecs[select.reshape(-1)])
    vectors = np.concatenate(chunks, axis=0)
    if strategy == "pool":
        vectors = vectors.mean(axis=0, keepdims=True)
    # Zero vectors have no direction; drop them so cosine stays meaningful.
    keep = np.linalg.norm(vectors, axis=1) > 0
    vectors = vectors[keep]
    side = "foreground" if foreground else "background"
    if vectors.shape[0] == 0:
        raise InputError(f"all {side} prototype vectors are zero")
    return np.ascontiguousarray(vectors, dtype=np.float32)


def build_prototypes(
    shots: list[tuple[np.ndarray, np.ndarray]],
    fg_strategy: str = "patch",
    bg_strategy: str = "dense",
    patch: int = 3,
) -> PrototypeSet:
    """Build prototypes from one or more (features, downsampled mask) shots.

    Default is patch-averaged foreground with dense background. With several
    shots the per-shot vector sets are concatenated before reduction.
    """
    if not shots:
        raise InputError("need at least one support shot")
    if patch < 1 or patch % 2 == 0:
        raise InputError(f"patch size must be odd and >= 1, got {patch}")
    for features, mask in shots:
        partition_support(features, mask)  # validates shapes and degeneracies
    fg = _apply_strategy(shots, True, fg_strategy, patch)
    bg = _apply_strategy(shots, False, bg_strategy, patch)
    return PrototypeSet(fg, bg, fg_strategy, bg_strategy)


def _max_cosine(query: np.ndarray, prototypes: np.ndarray) -> np.ndarray:
    h, w, c = query.shape
    q = query.reshape(-1, c).astype(np.float32)
    qn = np.linalg.norm(q, axis=1)
    pn = np.linalg.norm(prototypes, axis=1)
    dots = q @ prototypes.T
    denom = np.maximum(qn[:, None] * pn[None, :], EPS)
    sims = dots / denom
    return sims.max(axis=1).reshape(h, w)


def similarity_maps(query: np.ndarray, protos: PrototypeSet) -> SimilarityMaps:
    """Max-reduced cosine similarity of every query cell against the
    foreground and background prototype sets."""
    if query.shape[2] != protos.foreground.shape[1]:
        raise InputError(
            f"query has {query.shape[2]} channels, prototypes have "
            f"{protos.foreground.shape[1]}"
        )
    return SimilarityMaps(
        fg=_max_cosine(query, protos.foreground),
        bg=_max_cosine(query, protos.background),
    )


def decide_mask(sims: SimilarityMaps, out_h: int, out_w: int) -> np.ndarray:
    """Coarse segmentation: foreground where fg similarity strictly exceeds
    bg (ties go to background), nearest-neighbor upsampled to out_h x out_w."""
    decision = (sims.fg > sims.bg).astype(np.uint8)
    if decision.shape == (out_h, out_w):
        return decision
    return cv2.resize(decision, (out_w, out_h), interpolation=cv2.INTER_NEAREST)
