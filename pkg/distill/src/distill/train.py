"""Distillation training loop.

The student sees images at one resolution, the teacher at a higher one,
chosen so both output grids coincide; the student minimizes elementwise
squared error against the teacher features. Defaults follow the reference
recipe (160000 iterations, batch 12, Adam lr 1e-4, weight decay 1e-5,
teacher at 512, student at 256); the smoke configuration shrinks everything
for CPU runs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import cv2
import numpy as np
import torch

from . import DistillError
from .student import StudentSpec, build_student, save_checkpoint
from .teacher import build_teacher

IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class DistillConfig:
    teacher_id: str = "dino-vits8"
    teacher_input: int = 512
    student_input: int = 256
    student: StudentSpec = field(default_factory=StudentSpec)
    iterations: int = 160_000
    batch_size: int = 12
    lr: float = 1e-4
    weight_decay: float = 1e-5
    seed: int = 0
    teacher_norm: str = "none"  # or "layernorm" over channels
    checkpoint_every: int = 10_000


def list_images(image_dir: Path) -> list[Path]:
    paths = sorted(
        p for p in Path(image_dir).iterdir() if p.suffix.lower() in IMAGE_EXTS
    )
    if not paths:
        raise DistillError(f"no images found in {image_dir}")
    return paths


def _load_batch(paths, side, device):
    imgs = []
    for p in paths:
        img = cv2.imread(str(p), cv2.IMREAD_COLOR)
        if img is None:
            raise DistillError(f"unreadable image: {p}")
        img = cv2.cvtColor(img, cv2.COLOR_BGR2RGB)
        img = cv2.resize(img, (side, side), interpolation=cv2.INTER_LINEAR)
        imgs.append(img.astype(np.float32) / 255.0)
    x = torch.from_numpy(np.stack(imgs)).permute(0, 3, 1, 2)
    return x.to(device)


def _normalize_teacher(t: torch.Tensor, mode: str) -> torch.Tensor:
    if mode == "none":
        return t
    if mode == "layernorm":
        mean = t.mean(dim=1, keepdim=True)
        std = t.std(dim=1, keepdim=True)
        return (t - mean) / (std + 1e-6)
    raise DistillError(f"unknown teacher normalization {mode!r}")


def distill_train(
    cfg: DistillConfig, image_dir: Path, out_dir: Path
) -> tuple[torch.nn.Sequential, list[float]]:
    """Train the student against the teacher; returns (model, loss curve).

    Writes loss_curve.json/png, periodic checkpoints, and student.pt under
    out_dir. Reproducible for a fixed seed.
    """
    teacher = build_teacher(cfg.teacher_id, cfg.seed)
    t_grid = cfg.teacher_input // teacher.patch
    s_grid = cfg.student.grid(cfg.student_input)
    if t_grid != s_grid:
        raise DistillError(
            f"teacher grid {t_grid}x{t_grid} (input {cfg.teacher_input}, patch "
            f"{teacher.patch}) does not match student grid {s_grid}x{s_grid} "
            f"(input {cfg.student_input})"
        )
    spec = StudentSpec(cfg.student.base_width, teacher.channels)
    torch.manual_seed(cfg.seed)
    student = build_student(spec)
    opt = torch.optim.Adam(
        student.parameters(), lr=cfg.lr, weight_decay=cfg.weight_decay
    )

    paths = list_images(image_dir)
    rng = np.random.default_rng(cfg.seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    losses: list[float] = []
    student.train()
    for it in range(cfg.iterations):
        batch_paths = [paths[i] for i in rng.integers(0, len(paths), cfg.batch_size)]
        with torch.no_grad():
            t_in = _load_batch(batch_paths, cfg.teacher_input, "cpu")
            target = _normalize_teacher(teacher(t_in), cfg.teacher_norm)
        s_in = _load_batch(batch_paths, cfg.student_input, "cpu")
        pred = student(s_in)
        loss = torch.mean((pred - target) ** 2)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(float(loss.detach()))
        if cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            save_checkpoint(student, spec, out_dir / f"ckpt_{it + 1:07d}.pt")

    student.eval()
    save_checkpoint(student, spec, out_dir / "student.pt")
    (out_dir / "loss_curve.json").write_text(json.dumps(losses))
    _plot_losses(losses, out_dir / "loss_curve.png")
    return student, losses


def smoothed(losses: list[float], window: int = 50) -> list[float]:
    """Trailing moving average, used as the smoke-test signal."""
    out = []
    acc = 0.0
    for i, v in enumerate(losses):
        acc += v
        if i >= window:
            acc -= losses[i - window]
        out.append(acc / min(i + 1, window))
    return out


def _plot_losses(losses: list[float], path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(losses, alpha=0.35, label="loss")
    ax.plot(smoothed(losses), label="smoothed")
    ax.set_xlabel("iteration")
    ax.set_ylabel("squared error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
