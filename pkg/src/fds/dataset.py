"""Benchmark ingestion, episode construction, and resizing.

Dataset layout on disk:

    <root>/<product>/<class>/images/*.png|jpg
    <root>/<product>/<class>/masks/*.png    (8-bit, nonzero = foreground)

Image and mask files are paired by stem. Episodes are built with a
deterministic cyclic leave-one-out rule so benchmark runs are reproducible
without any persisted RNG state.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import cv2
import numpy as np

from . import InputError

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass(frozen=True)
class SamplePath:
    image: Path
    mask: Path


@dataclass(frozen=True)
class DefectClassEntry:
    name: str
    samples: tuple[SamplePath, ...]


@dataclass(frozen=True)
class ProductEntry:
    name: str
    classes: tuple[DefectClassEntry, ...]


@dataclass(frozen=True)
class DatasetIndex:
    products: tuple[ProductEntry, ...]

    def class_ids(self) -> list[tuple[str, str]]:
        return [(p.name, c.name) for p in self.products for c in p.classes]

    def samples(self, product: str, cls: str) -> tuple[SamplePath, ...]:
        for p in self.products:
            if p.name != product:
                continue
            for c in p.classes:
                if c.name == cls:
                    return c.samples
        raise InputError(f"unknown class {product}/{cls}")


@dataclass(frozen=True)
class Episode:
    product: str
    defect_class: str
    supports: tuple[SamplePath, ...]
    query: SamplePath


def scan_dataset(root: Path | str) -> DatasetIndex:
    """Walk `root` and build a validated index of all products and classes.

    Sample lists are sorted lexicographically by image file name, so two
    scans of the same tree produce identical indices.
    """
    root = Path(root)
    if not root.is_dir():
        raise InputError(f"dataset root does not exist: {root}")
    products = []
    for prod_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        classes = []
        for cls_dir in sorted(c for c in prod_dir.iterdir() if c.is_dir()):
            samples = _scan_class(cls_dir)
            classes.append(DefectClassEntry(cls_dir.name, samples))
        if classes:
            products.append(ProductEntry(prod_dir.name, tuple(classes)))
    if not products:
        raise InputError(f"no products found under {root}")
    return DatasetIndex(tuple(products))


def _scan_class(cls_dir: Path) -> tuple[SamplePath, ...]:
    img_dir = cls_dir / "images"
    mask_dir = cls_dir / "masks"
    if not img_dir.is_dir() or not mask_dir.is_dir():
        raise InputError(f"class folder {cls_dir} must contain images/ and masks/")
    images = sorted(
        p for p in img_dir.iterdir() if p.suffix.lower() in IMAGE_EXTS
    )
    if not images:
        raise InputError(f"empty class folder: {cls_dir}")
    samples = []
    for img in images:
        mask = _find_mask(mask_dir, img.stem)
        if mask is None:
            raise InputError(f"image {img} has no matching mask in {mask_dir}")
        samples.append(SamplePath(img, mask))
    return tuple(samples)


def _find_mask(mask_dir: Path, stem: str) -> Path | None:
    for ext in IMAGE_EXTS:
        cand = mask_dir / (stem + ext)
        if cand.exists():
            return cand
    return None


def build_episodes(
    index: DatasetIndex, product: str, cls: str, shots: int = 1
) -> list[Episode]:
    """Cyclic leave-one-out episodes: sample i is the query of episode i,
    its supports are the next `shots` samples cyclically.

    Every sample is a query exactly once; a query never appears among its
    own supports.
    """
    if shots < 1:
        raise InputError(f"shots must be >= 1, got {shots}")
    samples = index.samples(product, cls)
    if len(samples) < shots + 1:
        raise InputError(
            f"class {product}/{cls} too small for {shots}-shot: "
            f"{len(samples)} samples, need at least {shots + 1}"
        )
    n = len(samples)
    episodes = []
    for i in range(n):
        supports = tuple(samples[(i + 1 + j) % n] for j in range(shots))
        episodes.append(Episode(product, cls, supports, samples[i]))
    return episodes


def load_image(path: Path | str) -> np.ndarray:
    """Read an image as HxWx3 RGB uint8."""
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise InputError(f"unreadable image: {path}")
    return cv2.cvtColor(img, cv2.COLOR_BGR2RGB)


def load_mask(path: Path | str) -> np.ndarray:
    """Read a mask as HxW {0,1} uint8 (nonzero = foreground)."""
    m = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
    if m is None:
        raise InputError(f"unreadable mask: {path}")
    return (m > 0).astype(np.uint8)


def resize_image(img: np.ndarray, side: int = 256) -> np.ndarray:
    """Bilinear resize to side x side; channels preserved; identity when
    already at the target size."""
    if img.size == 0 or img.shape[0] == 0 or img.shape[1] == 0:
        raise InputError("cannot resize an empty image")
    if img.shape[0] == side and img.shape[1] == side:
        return img.copy()
    return cv2.resize(img, (side, side), interpolation=cv2.INTER_LINEAR)


def resize_mask(mask: np.ndarray, side: int) -> np.ndarray:
    """Nearest-neighbor resize of a binary mask (used for ground truth)."""
    if mask.shape[0] == side and mask.shape[1] == side:
        return mask.copy()
    return cv2.resize(mask, (side, side), interpolation=cv2.INTER_NEAREST)


def downsample_mask(mask: np.ndarray, target_h: int, target_w: int) -> np.ndarray:
    """Downsample a binary mask to the feature grid without losing small
    defects.

    Stage 1: bilinear downsample, threshold at 0.5. If that empties a
    nonempty mask, stage 2 retries with nearest neighbor. If still empty,
    stage 3 marks the cell containing each foreground component's centroid.
    The result is nonempty whenever the input is.
    """
    h, w = mask.shape
    if target_h > h or target_w > w:
        raise InputError(
            f"downsample target {target_h}x{target_w} exceeds input {h}x{w}"
        )
    mask = (mask > 0).astype(np.uint8)
    nonempty = bool(mask.any())

    out = cv2.resize(
        mask.astype(np.float32), (target_w, target_h), interpolation=cv2.INTER_LINEAR
    )
    out = (out >= 0.5).astype(np.uint8)
    if out.any() or not nonempty:
        return out

    out = cv2.resize(mask, (target_w, target_h), interpolation=cv2.INTER_NEAREST)
    if out.any():
        return out

    out = np.zeros((target_h, target_w), dtype=np.uint8)
    n_labels, labels = cv2.connectedComponents(mask, connectivity=8)
    for label in range(1, n_labels):
        ys, xs = np.nonzero(labels == label)
        cy = int(ys.mean() * target_h / h)
        cx = int(xs.mean() * target_w / w)
        out[min(cy, target_h - 1), min(cx, target_w - 1)] = 1
    return out
