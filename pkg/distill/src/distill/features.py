"""Dump dense features for whole image directories as FMAP files.

FMAP layout (little-endian): magic ``FMAP``, version u32=1, dtype u8=0
(f32), H u32, W u32, C u32, then H*W*C f32 row-major, channel fastest.
Per-extractor input resizing (e.g. 266x266 for patch-14 models) is applied
here, so the dumped grids are whatever the extractor naturally produces.
"""

from __future__ import annotations

import struct
from pathlib import Path

import cv2
import numpy as np
import torch

from . import DistillError
from .student import load_checkpoint
from .teacher import ToyPatch8Teacher
from .train import list_images

_HEADER = struct.Struct("<4sIBIII")


def save_fmap(f: np.ndarray, path: Path) -> None:
    f = np.ascontiguousarray(f, dtype="<f4")
    h, w, c = f.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(b"FMAP", 1, 0, h, w, c))
        fh.write(f.tobytes())


def _load_resized(path: Path, side: int) -> torch.Tensor:
    img = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if img is None:
        raise DistillError(f"unreadable image: {path}")
    img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
    img = cv2.resize(img, (side, side), interpolation=cv2.INTER_LINEAR)
    x = torch.from_numpy(img.astype(np.float32) / 255.0)
    return x.permute(2, 0, 1)[None]


def _resnet_extractor(arch: str, layer: str, weights_path: Path | None):
    from torchvision import models

    builders = {
        "resnet18": models.resnet18,
        "resnet50": models.resnet50,
        "wideresnet50": models.wide_resnet50_2,
    }
    net = builders[arch](weights=None)
    if weights_path is not None:
        state = torch.load(weights_path, map_location="cpu", weights_only=True)
        net.load_state_dict(state)
    net.eval()

    def run(x):
        with torch.no_grad():
            x = net.maxpool(net.relu(net.bn1(net.conv1(x))))
            x = net.layer1(x)
            x = net.layer2(x)
            if layer == "layer3":
                x = net.layer3(x)
        return x

    return run


# id -> (input side, runner factory); factories take the optional weights path.
def _known_extractors(size: int) -> dict:
    return {
        "toy-vit8": (size, lambda _w: _frozen(ToyPatch8Teacher(0))),
        "dino-vits8": (size, _dino),
        "dinov2-vits14": (266, _dinov2),
        "resnet18-layer2": (size, lambda w: _resnet_extractor("resnet18", "layer2", w)),
        "resnet18-layer3": (size, lambda w: _resnet_extractor("resnet18", "layer3", w)),
        "resnet50-layer2": (size, lambda w: _resnet_extractor("resnet50", "layer2", w)),
        "resnet50-layer3": (size, lambda w: _resnet_extractor("resnet50", "layer3", w)),
        "wideresnet50-layer2": (
            size, lambda w: _resnet_extractor("wideresnet50", "layer2", w)),
    }


def _frozen(module):
    def run(x):
        with torch.no_grad():
            return module(x)
    return run


def _dino(_weights):
    from .teacher import DinoPatch8Teacher
    return _frozen(DinoPatch8Teacher())


def _dinov2(_weights):
    try:
        vit = torch.hub.load("facebookresearch/dinov2", "dinov2_vits14")
    except Exception as e:
        raise DistillError(f"cannot load dinov2_vits14 from torch hub ({e})") from e
    vit.eval()

    def run(x):
        with torch.no_grad():
            tokens = vit.forward_features(x)["x_norm_patchtokens"]
        b, _, h, w = x.shape
        g = h // 14
        return tokens.transpose(1, 2).reshape(b, -1, g, g)

    return run


def dump_features(
    image_dir: Path,
    extractor_id: str,
    out_dir: Path,
    size: int = 256,
    model_path: Path | None = None,
    weights_path: Path | None = None,
) -> int:
    """Write one .fmap per image; returns the count."""
    if extractor_id == "student":
        if model_path is None:
            raise DistillError("extractor 'student' needs --model (checkpoint)")
        model, _ = load_checkpoint(model_path)
        side, run = size, _frozen(model)
    else:
        table = _known_extractors(size)
        if extractor_id not in table:
            known = ", ".join(["student", *table])
            raise DistillError(
                f"unknown extractor {extractor_id!r}; known extractors: {known}"
            )
        side, factory = table[extractor_id]
        run = factory(weights_path)

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = list_images(image_dir)
    for p in paths:
        x = _load_resized(p, side)
        f = run(x)[0].permute(1, 2, 0).numpy()
        save_fmap(f, out_dir / (p.stem + ".fmap"))
    return len(paths)
