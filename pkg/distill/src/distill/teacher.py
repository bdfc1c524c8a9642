"""Teacher feature models.

The reference teacher is a self-supervised ViT with patch size 8, last-block
patch tokens as output (loaded via torch hub, so it needs network access and
a weight cache). ``toy-vit8`` is a frozen, seeded random patch-embedding
network with the same 8-pixel grid, used for offline smoke runs and tests.
"""

from __future__ import annotations

import torch
from torch import nn

from . import DistillError

KNOWN_TEACHERS = ("dino-vits8", "toy-vit8")


class ToyPatch8Teacher(nn.Module):
    """Frozen random patch-8 feature extractor: deterministic per seed."""

    patch = 8
    channels = 384

    def __init__(self, seed: int = 0):
        super().__init__()
        gen = torch.Generator().manual_seed(seed)
        self.embed = nn.Conv2d(3, self.channels, kernel_size=8, stride=8)
        self.mix = nn.Conv2d(self.channels, self.channels, kernel_size=1)
        with torch.no_grad():
            for m in (self.embed, self.mix):
                m.weight.copy_(torch.randn(m.weight.shape, generator=gen) * 0.2)
                m.bias.zero_()
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.mix(torch.tanh(self.embed(x)))


class DinoPatch8Teacher(nn.Module):
    patch = 8
    channels = 384

    def __init__(self):
        super().__init__()
        try:
            self.vit = torch.hub.load("facebookresearch/dino:main", "dino_vits8")
        except Exception as e:  # hub needs network access + cache
            raise DistillError(
                f"cannot load dino_vits8 from torch hub ({e}); use the "
                f"toy-vit8 teacher for offline runs"
            ) from e
        for p in self.parameters():
            p.requires_grad_(False)
        self.eval()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        b, _, h, w = x.shape
        tokens = self.vit.get_intermediate_layers(x, n=1)[0][:, 1:]  # drop CLS
        grid_h, grid_w = h // self.patch, w // self.patch
        return tokens.transpose(1, 2).reshape(b, self.channels, grid_h, grid_w)


def build_teacher(teacher_id: str, seed: int = 0) -> nn.Module:
    if teacher_id == "toy-vit8":
        return ToyPatch8Teacher(seed)
    if teacher_id == "dino-vits8":
        return DinoPatch8Teacher()
    raise DistillError(
        f"unknown teacher {teacher_id!r}; known teachers: {', '.join(KNOWN_TEACHERS)}"
    )
