"""The shallow high-resolution CNN student.

Six layers: conv k4/s1/p3 + pool k2/s2/p1, twice, then conv k3/s1/p1 and a
final conv k4/s1/p0. A 256x256 input yields a 64x64 grid (downsampling
factor 4) with `out_channels` features, 384 by default. The base width `c`
is 256 for the large variant and 128 for the small one.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from . import DistillError


@dataclass(frozen=True)
class StudentSpec:
    base_width: int = 256  # 256 = large, 128 = small
    out_channels: int = 384

    def grid(self, input_side: int) -> int:
        """Output spatial side for a square input."""
        s = input_side + 2 * 3 - 4 + 1  # conv k4 p3
        s = (s + 2 - 2) // 2 + 1        # pool k2 s2 p1
        s = s + 2 * 3 - 4 + 1           # conv k4 p3
        s = (s + 2 - 2) // 2 + 1        # pool k2 s2 p1
        s = s + 2 - 3 + 1               # conv k3 p1
        s = s - 4 + 1                   # conv k4 p0
        return s


def build_student(spec: StudentSpec) -> nn.Sequential:
    if spec.base_width < 1 or spec.out_channels < 1:
        raise DistillError(f"bad student spec: {spec}")
    c = spec.base_width
    return nn.Sequential(
        nn.Conv2d(3, c, kernel_size=4, stride=1, padding=3),
        nn.ReLU(inplace=True),
        nn.AvgPool2d(kernel_size=2, stride=2, padding=1),
        nn.Conv2d(c, 2 * c, kernel_size=4, stride=1, padding=3),
        nn.ReLU(inplace=True),
        nn.AvgPool2d(kernel_size=2, stride=2, padding=1),
        nn.Conv2d(2 * c, 2 * c, kernel_size=3, stride=1, padding=1),
        nn.ReLU(inplace=True),
        nn.Conv2d(2 * c, spec.out_channels, kernel_size=4, stride=1, padding=0),
    )


def save_checkpoint(model: nn.Sequential, spec: StudentSpec, path) -> None:
    torch.save(
        {"spec": {"base_width": spec.base_width,
                  "out_channels": spec.out_channels},
         "state_dict": model.state_dict()},
        path,
    )


def load_checkpoint(path) -> tuple[nn.Sequential, StudentSpec]:
    blob = torch.load(path, map_location="cpu", weights_only=True)
    spec = StudentSpec(**blob["spec"])
    model = build_student(spec)
    model.load_state_dict(blob["state_dict"])
    model.eval()
    return model, spec
