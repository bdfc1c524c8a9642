"""Export the trained student to the engine's portable graph format.

File layout (little-endian): magic ``PGRF``, version u32=1, header length
u32, header JSON, raw f32 weight blob. The header lists conv2d/avgpool2d
layers with [offset, count] slices into the blob; conv weights are stored as
(out, in, k, k) row-major. A parity check against a model rebuilt from the
serialized layers must pass before any file is written.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
import torch
from torch import nn

from . import DistillError

MAGIC = b"PGRF"
VERSION = 1


def _serialize(model: nn.Sequential, meta: dict) -> tuple[dict, np.ndarray]:
    layers = []
    chunks: list[np.ndarray] = []
    offset = 0
    modules = list(model)
    i = 0
    while i < len(modules):
        m = modules[i]
        if isinstance(m, nn.Conv2d):
            if m.stride[0] != m.stride[1] or m.padding[0] != m.padding[1]:
                raise DistillError("only square stride/padding supported")
            w = m.weight.detach().numpy().astype("<f4")
            b = (m.bias.detach().numpy().astype("<f4") if m.bias is not None
                 else np.zeros(m.out_channels, dtype="<f4"))
            relu = i + 1 < len(modules) and isinstance(modules[i + 1], nn.ReLU)
            layers.append({
                "op": "conv2d",
                "in": m.in_channels,
                "out": m.out_channels,
                "kernel": m.kernel_size[0],
                "stride": m.stride[0],
                "pad": m.padding[0],
                "relu": relu,
                "weight": [offset, w.size],
                "bias": [offset + w.size, b.size],
            })
            chunks.append(w.reshape(-1))
            chunks.append(b)
            offset += w.size + b.size
            i += 2 if relu else 1
        elif isinstance(m, nn.AvgPool2d):
            k = m.kernel_size if isinstance(m.kernel_size, int) else m.kernel_size[0]
            s = m.stride if isinstance(m.stride, int) else m.stride[0]
            p = m.padding if isinstance(m.padding, int) else m.padding[0]
            layers.append({"op": "avgpool2d", "kernel": k, "stride": s, "pad": p})
            i += 1
        elif isinstance(m, nn.ReLU):
            raise DistillError("ReLU not preceded by a convolution")
        else:
            raise DistillError(f"unsupported module for export: {type(m).__name__}")
    graph = {"input_channels": 3, "layers": layers, "meta": meta}
    blob = np.concatenate(chunks) if chunks else np.array([], dtype="<f4")
    return graph, blob


def rebuild_torch(graph: dict, blob: np.ndarray) -> nn.Sequential:
    """Reconstruct a torch model from serialized layers (parity reference)."""
    modules: list[nn.Module] = []
    for layer in graph["layers"]:
        if layer["op"] == "conv2d":
            conv = nn.Conv2d(layer["in"], layer["out"], layer["kernel"],
                             layer["stride"], layer["pad"])
            off, count = layer["weight"]
            w = blob[off : off + count].reshape(
                layer["out"], layer["in"], layer["kernel"], layer["kernel"])
            boff, bcount = layer["bias"]
            with torch.no_grad():
                conv.weight.copy_(torch.from_numpy(w.copy()))
                conv.bias.copy_(torch.from_numpy(blob[boff : boff + bcount].copy()))
            modules.append(conv)
            if layer.get("relu"):
                modules.append(nn.ReLU())
        else:
            modules.append(nn.AvgPool2d(layer["kernel"], layer["stride"],
                                        layer["pad"]))
    model = nn.Sequential(*modules)
    model.eval()
    return model


def read_graph_file(path: Path) -> tuple[dict, np.ndarray]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise DistillError(f"{path}: not a portable graph file")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != VERSION:
        raise DistillError(f"{path}: unsupported version {version}")
    graph = json.loads(data[12 : 12 + hlen].decode("utf-8"))
    blob = np.frombuffer(data[12 + hlen :], dtype="<f4")
    return graph, blob


def export_student(
    model: nn.Sequential,
    path: Path,
    meta: dict | None = None,
    parity_inputs: int = 8,
    parity_side: int = 32,
    tol: float = 1e-4,
) -> None:
    """Serialize the student; refuses to emit the file if a model rebuilt
    from the serialized form disagrees with the original beyond `tol`."""
    model = model.eval()
    graph, blob = _serialize(model, meta or {})
    rebuilt = rebuild_torch(graph, blob)
    gen = torch.Generator().manual_seed(0)
    with torch.no_grad():
        for _ in range(parity_inputs):
            x = torch.rand((1, 3, parity_side, parity_side), generator=gen)
            diff = (model(x) - rebuilt(x)).abs().max().item()
            if diff > tol:
                raise DistillError(
                    f"export parity check failed: max abs diff {diff:.2e} > {tol}"
                )
    header = json.dumps(graph, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(header)))
        fh.write(header)
        fh.write(np.ascontiguousarray(blob, dtype="<f4").tobytes())
