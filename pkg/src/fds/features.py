"""Feature extraction backends and the FMAP feature-file format.

Three backends are supported:

* ``avgpool`` — block mean pooling of the raw image, used for desk-scale
  testing of the full pipeline without any neural runtime;
* ``feature-file`` — loads precomputed features from FMAP files matched to
  the source image by file stem;
* ``portable-model`` — runs a serialized network graph (see fds.graph).

FMAP file layout (little-endian):
magic ``FMAP``, version u32=1, dtype u8=0 (f32), H u32, W u32, C u32, then
H*W*C f32 values row-major with channel fastest.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import InputError
from .graph import load_graph, run_graph

MAGIC = b"FMAP"
VERSION = 1
_HEADER = struct.Struct("<4sIBIII")


def validate_feature_map(f: np.ndarray) -> np.ndarray:
    if f.ndim != 3 or min(f.shape) < 1:
        raise InputError(f"feature map must be H'xW'xC', got shape {f.shape}")
    if not np.isfinite(f).all():
        raise InputError("feature map contains NaN or Inf")
    return np.ascontiguousarray(f, dtype=np.float32)


def save_features(f: np.ndarray, path: Path | str) -> None:
    f = validate_feature_map(f)
    h, w, c = f.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, 0, h, w, c))
        fh.write(f.tobytes())


def load_features(path: Path | str) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < _HEADER.size:
            raise InputError(f"{path}: truncated header, got {len(head)} bytes")
        magic, version, dtype, h, w, c = _HEADER.unpack(head)
        if magic != MAGIC:
            raise InputError(f"{path}: not a feature file (bad magic {magic!r})")
        if version != VERSION:
            raise InputError(f"{path}: unsupported version {version}")
        if dtype != 0:
            raise InputError(f"{path}: unsupported dtype code {dtype}")
        expected = h * w * c * 4
        payload = fh.read(expected + 1)
        if len(payload) != expected:
            raise InputError(
                f"{path}: expected {expected} payload bytes at offset "
                f"{_HEADER.size}, got {len(payload)}"
            )
    f = np.frombuffer(payload, dtype="<f4").reshape(h, w, c)
    return validate_feature_map(f)


@dataclass(frozen=True)
class ExtractorSpec:
    """Declares which backend produces feature maps and, optionally, the
    shape it is expected to emit (checked at extraction time)."""

    kind: str  # "avgpool" | "feature-file" | "portable-model"
    model_path: Path | None = None
    features_dir: Path | None = None
    pool_factor: int = 4
    expected_shape: tuple[int, int, int] | None = None


class Extractor:
    """Deterministic feature source: identical input, bit-identical output."""

    def __init__(self, spec: ExtractorSpec):
        self.spec = spec
        if spec.kind == "portable-model":
            if spec.model_path is None:
                raise InputError("portable-model backend requires a model path")
            self._graph = load_graph(spec.model_path)
        elif spec.kind == "feature-file":
            if spec.features_dir is None or not Path(spec.features_dir).is_dir():
                raise InputError(
                    f"feature-file backend requires an existing directory, "
                    f"got {spec.features_dir}"
                )
        elif spec.kind == "avgpool":
            if spec.pool_factor < 1:
                raise InputError("pool factor must be >= 1")
        else:
            raise InputError(f"unknown extractor kind: {spec.kind}")

    def extract(self, img: np.ndarray, source_path: Path | None = None) -> np.ndarray:
        if self.spec.kind == "avgpool":
            f = avgpool_features(img, self.spec.pool_factor)
        elif self.spec.kind == "portable-model":
            x = img.astype(np.float32) / 255.0
            f = run_graph(self._graph, np.transpose(x, (2, 0, 1)))
            f = np.transpose(f, (1, 2, 0)).astype(np.float32)
        else:
            if source_path is None:
                raise InputError("feature-file backend needs the image path")
            fpath = Path(self.spec.features_dir) / (Path(source_path).stem + ".fmap")
            if not fpath.exists():
                raise InputError(f"no feature file for {source_path}: {fpath}")
            f = load_features(fpath)
        f = validate_feature_map(f)
        if self.spec.expected_shape is not None and f.shape != self.spec.expected_shape:
            raise InputError(
                f"extractor produced shape {f.shape}, "
                f"expected {self.spec.expected_shape}"
            )
        return f


def avgpool_features(img: np.ndarray, factor: int) -> np.ndarray:
    """Mean over non-overlapping factor x factor blocks, channels kept."""
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    if h % factor or w % factor:
        raise InputError(
            f"image {h}x{w} not divisible by pool factor {factor}"
        )
    x = img.astype(np.float32).reshape(h // factor, factor, w // factor, factor, c)
    return x.mean(axis=(1, 3))
