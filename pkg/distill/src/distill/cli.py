"""Command-line interface for the feature-distillation toolkit."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import DistillError
from .export import export_student
from .features import dump_features
from .proposals import dump_proposals
from .student import StudentSpec, load_checkpoint
from .train import DistillConfig, distill_train


@click.group()
def cli() -> None:
    """Distill a patch-descriptor teacher into a compact convolutional
    student, and dump feature/proposal files for the segmentation engine."""


@cli.command()
@click.argument("image_dir", type=click.Path(exists=True, file_okay=False,
                                             path_type=Path))
@click.option("--out", "out_dir", required=True,
              type=click.Path(path_type=Path), help="Output directory.")
@click.option("--teacher", "teacher_id", default="dino-vits8",
              show_default=True, help="Teacher identifier.")
@click.option("--teacher-input", default=512, show_default=True, type=int)
@click.option("--student-input", default=256, show_default=True, type=int)
@click.option("--width", default=256, show_default=True, type=int,
              help="Student base channel width.")
@click.option("--iterations", default=160_000, show_default=True, type=int)
@click.option("--batch-size", default=12, show_default=True, type=int)
@click.option("--lr", default=1e-4, show_default=True, type=float)
@click.option("--weight-decay", default=1e-5, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--teacher-norm", default="none", show_default=True,
              type=click.Choice(["none", "layernorm"]))
@click.option("--checkpoint-every", default=10_000, show_default=True,
              type=int)
def train(image_dir, out_dir, teacher_id, teacher_input, student_input,
          width, iterations, batch_size, lr, weight_decay, seed,
          teacher_norm, checkpoint_every) -> None:
    """Distill a student network on the images in IMAGE_DIR."""
    cfg = DistillConfig(
        teacher_id=teacher_id,
        teacher_input=teacher_input,
        student_input=student_input,
        student=StudentSpec(base_width=width),
        iterations=iterations,
        batch_size=batch_size,
        lr=lr,
        weight_decay=weight_decay,
        seed=seed,
        teacher_norm=teacher_norm,
        checkpoint_every=checkpoint_every,
    )
    _, losses = distill_train(cfg, image_dir, out_dir)
    click.echo(f"trained {iterations} iterations; final loss {losses[-1]:.6f}")
    click.echo(f"checkpoint: {Path(out_dir) / 'student.pt'}")


@cli.command()
@click.argument("checkpoint", type=click.Path(exists=True, dir_okay=False,
                                              path_type=Path))
@click.option("--out", "out_path", required=True,
              type=click.Path(path_type=Path), help="Graph file to write.")
def export(checkpoint, out_path) -> None:
    """Export a trained student checkpoint to a portable graph file."""
    model, spec = load_checkpoint(checkpoint)
    meta = {"base_width": spec.base_width, "out_channels": spec.out_channels}
    export_student(model, out_path, meta)
    click.echo(f"wrote {out_path}")


@cli.command("dump-proposals")
@click.argument("image_dir", type=click.Path(exists=True, file_okay=False,
                                             path_type=Path))
@click.option("--out", "out_dir", required=True,
              type=click.Path(path_type=Path))
@click.option("--iou-thresh", default=0.5, show_default=True, type=float,
              help="Overlap threshold for duplicate suppression.")
@click.option("--conf-thresh", default=0.1, show_default=True, type=float,
              help="Minimum proposal confidence.")
def dump_proposals_cmd(image_dir, out_dir, iou_thresh, conf_thresh) -> None:
    """Write one region-proposal file per image in IMAGE_DIR."""
    n = dump_proposals(image_dir, out_dir, iou_thresh, conf_thresh)
    click.echo(f"wrote {n} proposal files to {out_dir}")


@cli.command("dump-features")
@click.argument("image_dir", type=click.Path(exists=True, file_okay=False,
                                             path_type=Path))
@click.option("--out", "out_dir", required=True,
              type=click.Path(path_type=Path))
@click.option("--extractor", "extractor_id", default="student",
              show_default=True, help="Extractor identifier.")
@click.option("--size", default=256, show_default=True, type=int,
              help="Input side unless the extractor dictates its own.")
@click.option("--model", "model_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Student checkpoint (extractor 'student').")
@click.option("--weights", "weights_path", default=None,
              type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="State-dict file for torchvision backbones.")
def dump_features_cmd(image_dir, out_dir, extractor_id, size, model_path,
                      weights_path) -> None:
    """Write one feature file per image in IMAGE_DIR."""
    n = dump_features(image_dir, extractor_id, out_dir, size,
                      model_path, weights_path)
    click.echo(f"wrote {n} feature files to {out_dir}")


def main() -> None:
    try:
        cli.main(standalone_mode=False)
    except click.UsageError as e:
        e.show()
        sys.exit(2)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except DistillError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
