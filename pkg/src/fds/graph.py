"""Portable network-graph container and numpy executor.

The engine consumes feed-forward image models as a single self-describing
file so inference needs no ML framework. Layout (little-endian):

    magic ``PGRF``, version u32=1,
    header length u32, header JSON (utf-8),
    raw f32 weight blob.

Header: ``{"input_channels": int, "meta": {...}, "layers": [...]}`` where a
layer is one of

    {"op": "conv2d", "in": c, "out": c, "kernel": k, "stride": s,
     "pad": p, "relu": bool, "weight": [offset, count], "bias": [offset, count]}
    {"op": "avgpool2d", "kernel": k, "stride": s, "pad": p}

Offsets/counts index f32 elements in the weight blob. Convolution weights are
stored as (out, in, k, k) row-major; average pooling divides by the full
window (zero padding included), matching the common framework default.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import InputError

MAGIC = b"PGRF"
VERSION = 1


@dataclass(frozen=True)
class Graph:
    input_channels: int
    layers: tuple[dict, ...]
    weights: np.ndarray  # flat f32 blob
    meta: dict


def save_graph(graph_dict: dict, weights: np.ndarray, path: Path | str) -> None:
    """Write a graph file. ``graph_dict`` holds input_channels/meta/layers;
    ``weights`` is the flat f32 blob the layers index into."""
    header = json.dumps(graph_dict, sort_keys=True).encode("utf-8")
    blob = np.ascontiguousarray(weights, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(blob)


def load_graph(path: Path | str) -> Graph:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise InputError(f"{path}: not a portable graph file (magic {magic!r})")
        version, hlen = struct.unpack("<II", fh.read(8))
        if version != VERSION:
            raise InputError(f"{path}: unsupported graph version {version}")
        try:
            header = json.loads(fh.read(hlen).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise InputError(f"{path}: corrupt graph header: {e}") from e
        blob = fh.read()
    weights = np.frombuffer(blob, dtype="<f4")
    layers = tuple(header.get("layers", ()))
    for i, layer in enumerate(layers):
        if layer.get("op") not in ("conv2d", "avgpool2d"):
            raise InputError(f"{path}: layer {i} has unknown op {layer.get('op')!r}")
        for key in ("weight", "bias"):
            if key in layer:
                off, count = layer[key]
                if off + count > weights.size:
                    raise InputError(
                        f"{path}: layer {i} {key} slice [{off}:{off + count}] "
                        f"exceeds blob of {weights.size} values"
                    )
    return Graph(
        input_channels=int(header.get("input_channels", 3)),
        layers=layers,
        weights=weights,
        meta=header.get("meta", {}),
    )


def run_graph(graph: Graph, x: np.ndarray) -> np.ndarray:
    """Run a CHW float32 tensor through the graph, returning CHW features."""
    if x.ndim != 3 or x.shape[0] != graph.input_channels:
        raise InputError(
            f"graph expects {graph.input_channels}xHxW input, got {x.shape}"
        )
    x = x.astype(np.float32)
    for layer in graph.layers:
        if layer["op"] == "conv2d":
            off, count = layer["weight"]
            w = graph.weights[off : off + count].reshape(
                layer["out"], layer["in"], layer["kernel"], layer["kernel"]
            )
            boff, bcount = layer["bias"]
            b = graph.weights[boff : boff + bcount]
            x = _conv2d(x, w, b, layer["stride"], layer["pad"])
            if layer.get("relu"):
                np.maximum(x, 0.0, out=x)
        else:
            x = _avgpool2d(x, layer["kernel"], layer["stride"], layer["pad"])
    return x


def _pad(x: np.ndarray, p: int) -> np.ndarray:
    if p == 0:
        return x
    return np.pad(x, ((0, 0), (p, p), (p, p)))


def _conv2d(x, w, b, stride: int, pad: int) -> np.ndarray:
    x = _pad(x, pad)
    k = w.shape[2]
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]  # (cin, oh, ow, k, k)
    out = np.einsum("cijxy,ocxy->oij", windows, w, optimize=True)
    return (out + b[:, None, None]).astype(np.float32)


def _avgpool2d(x, k: int, stride: int, pad: int) -> np.ndarray:
    x = _pad(x, pad)
    windows = np.lib.stride_tricks.sliding_window_view(x, (k, k), axis=(1, 2))
    windows = windows[:, ::stride, ::stride]
    return windows.mean(axis=(3, 4)).astype(np.float32)
