"""Command-line interface.

Exit codes: 0 success, 1 benchmark-level failure, 2 input/config error.
"""

from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click

from . import BenchmarkError, InputError, __version__
from .features import ExtractorSpec, load_features, save_features, Extractor
from .fusion import FusionConfig
from .maskops import load_proposals, deoverlap
from .pipeline import RunConfig, run_benchmark, run_episode, write_episode_artifacts
from .report import write_report
from . import dataset as ds

_FUSION_NAMES = {"paper": "paper", "none": "none", "sam-only": "sam_only",
                 "union": "simple_union"}


def _extractor_options(fn):
    fn = click.option("--model", type=click.Path(path_type=Path),
                      help="Portable network graph file.")(fn)
    fn = click.option("--features-dir", type=click.Path(path_type=Path),
                      help="Directory of precomputed .fmap files.")(fn)
    fn = click.option("--avgpool", type=int, default=None,
                      help="Use the built-in block-average extractor "
                           "with this pool factor.")(fn)
    return fn


def _build_extractor_spec(model, features_dir, avgpool) -> ExtractorSpec:
    given = [x is not None for x in (model, features_dir, avgpool)]
    if sum(given) != 1:
        raise InputError(
            "select exactly one extractor: --model, --features-dir, or --avgpool"
        )
    if model is not None:
        if not Path(model).exists():
            raise InputError(f"model file not found: {model}")
        return ExtractorSpec(kind="portable-model", model_path=Path(model))
    if features_dir is not None:
        return ExtractorSpec(kind="feature-file", features_dir=Path(features_dir))
    return ExtractorSpec(kind="avgpool", pool_factor=avgpool)


def _fusion_options(fn):
    fn = click.option("--tau1", type=float, default=0.2, show_default=True,
                      help="Proposal selection overlap threshold.")(fn)
    fn = click.option("--tau2", type=float, default=0.9, show_default=True,
                      help="Component replacement coverage threshold.")(fn)
    fn = click.option("--dilate", type=int, default=21, show_default=True,
                      help="Dilation kernel size (odd).")(fn)
    fn = click.option("--patch", type=int, default=3, show_default=True,
                      help="Foreground patch-averaging size (odd).")(fn)
    fn = click.option("--fg-strategy", type=click.Choice(["dense", "patch", "pool"]),
                      default="patch", show_default=True)(fn)
    fn = click.option("--bg-strategy", type=click.Choice(["dense", "patch", "pool"]),
                      default="dense", show_default=True)(fn)
    fn = click.option("--fusion", type=click.Choice(list(_FUSION_NAMES)),
                      default="paper", show_default=True)(fn)
    return fn


@click.group()
@click.version_option(__version__)
def cli():
    """Few-shot defect segmentation engine."""
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")


@cli.command()
@click.option("--support-image", "support_images", multiple=True, required=True,
              type=click.Path(path_type=Path))
@click.option("--support-mask", "support_masks", multiple=True, required=True,
              type=click.Path(path_type=Path))
@click.option("--query", required=True, type=click.Path(path_type=Path))
@click.option("--gt", type=click.Path(path_type=Path), default=None,
              help="Query ground-truth mask (enables IoU).")
@click.option("--proposals", type=click.Path(path_type=Path), default=None,
              help="Proposal file for the query image.")
@click.option("--size", type=int, default=256, show_default=True)
@click.option("--out", type=click.Path(path_type=Path), default=Path("fds-out"),
              show_default=True)
@_extractor_options
@_fusion_options
def run(support_images, support_masks, query, gt, proposals, size, out,
        model, features_dir, avgpool,
        tau1, tau2, dilate, patch, fg_strategy, bg_strategy, fusion):
    """Segment one query image from explicit support pairs."""
    if len(support_images) != len(support_masks):
        raise InputError("need one --support-mask per --support-image")
    for p in list(support_images) + list(support_masks) + [query]:
        if not Path(p).exists():
            raise InputError(f"file not found: {p}")
    spec = _build_extractor_spec(model, features_dir, avgpool)
    cfg = RunConfig(
        extractor=spec,
        fusion=FusionConfig(tau1, tau2, dilate, _FUSION_NAMES[fusion]),
        shots=len(support_images),
        image_size=size,
        patch=patch,
        fg_strategy=fg_strategy,
        bg_strategy=bg_strategy,
    )
    props = None
    if proposals is not None:
        props = deoverlap(load_proposals(proposals))
    result = run_episode(
        cfg, Extractor(spec), list(zip(support_images, support_masks)),
        query, gt, proposals=props,
    )
    write_episode_artifacts(result, query, Path(out), size)
    if gt is not None:
        click.echo(f"IoU: {result.iou:.4f}")
    click.echo(f"artifacts written to {out}")


@cli.command()
@click.option("--root", required=True, type=click.Path(path_type=Path),
              help="Benchmark root: <root>/<product>/<class>/{images,masks}.")
@click.option("--classes", multiple=True,
              help="Restrict to product/class ids (repeatable).")
@click.option("--shots", type=int, default=1, show_default=True)
@click.option("--proposals-dir", type=click.Path(path_type=Path), default=None)
@click.option("--workers", type=int, default=1, show_default=True)
@click.option("--size", type=int, default=256, show_default=True)
@click.option("--pooled-fb", is_flag=True,
              help="Pool all products' pixels for the mean FB-IoU instead of "
                   "averaging per-product values.")
@click.option("--out", type=click.Path(path_type=Path), default=Path("fds-out"),
              show_default=True)
@_extractor_options
@_fusion_options
def bench(root, classes, shots, proposals_dir, workers, size, pooled_fb, out,
          model, features_dir, avgpool,
          tau1, tau2, dilate, patch, fg_strategy, bg_strategy, fusion):
    """Run the full benchmark and write report + figures."""
    if not Path(root).is_dir():
        raise InputError(f"dataset root not found: {root}")
    spec = _build_extractor_spec(model, features_dir, avgpool)
    cfg = RunConfig(
        extractor=spec,
        fusion=FusionConfig(tau1, tau2, dilate, _FUSION_NAMES[fusion]),
        shots=shots,
        image_size=size,
        patch=patch,
        fg_strategy=fg_strategy,
        bg_strategy=bg_strategy,
        proposals_dir=proposals_dir,
        workers=workers,
    )
    doc = run_benchmark(cfg, Path(root), list(classes) or None, pooled_fb)
    path = write_report(doc, Path(out))
    click.echo(f"report written to {path}")
    click.echo(f"mIoU: {doc['payload']['miou']:.4f}  "
               f"mean FB-IoU: {doc['payload']['mean_fb_iou']:.4f}")


@cli.group()
def features():
    """Feature-file tools."""


@features.command("dump")
@click.option("--images", required=True, type=click.Path(path_type=Path),
              help="Directory of images to extract.")
@click.option("--out", required=True, type=click.Path(path_type=Path))
@click.option("--size", type=int, default=256, show_default=True)
@_extractor_options
def features_dump(images, out, size, model, features_dir, avgpool):
    """Extract features for every image in a directory into .fmap files."""
    spec = _build_extractor_spec(model, features_dir, avgpool)
    extractor = Extractor(spec)
    images = Path(images)
    if not images.is_dir():
        raise InputError(f"image directory not found: {images}")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    paths = sorted(p for p in images.iterdir() if p.suffix.lower() in ds.IMAGE_EXTS)
    if not paths:
        raise InputError(f"no images found in {images}")
    for p in paths:
        img = ds.resize_image(ds.load_image(p), size)
        save_features(extractor.extract(img, p), out / (p.stem + ".fmap"))
    click.echo(f"wrote {len(paths)} feature files to {out}")


@features.command("info")
@click.argument("path", type=click.Path(path_type=Path))
def features_info(path):
    """Print the header and basic stats of a feature file."""
    f = load_features(path)
    click.echo(json.dumps({
        "path": str(path),
        "height": f.shape[0],
        "width": f.shape[1],
        "channels": f.shape[2],
        "min": float(f.min()),
        "max": float(f.max()),
        "mean": float(f.mean()),
    }, indent=2))


@cli.group()
def proposals():
    """Proposal-file tools."""


@proposals.command("info")
@click.argument("path", type=click.Path(path_type=Path))
def proposals_info(path):
    """Validate a proposal file and print a summary."""
    raw = load_proposals(path)
    disjoint = deoverlap(raw)
    click.echo(json.dumps({
        "path": str(path),
        "masks": len(raw),
        "after_deoverlap": len(disjoint.masks),
        "areas": [int(m.sum()) for m, _ in raw],
        "confidences": [c for _, c in raw],
    }, indent=2))


def main():
    try:
        cli.main(standalone_mode=False)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.UsageError as e:
        e.show()
        sys.exit(2)
    except click.ClickException as e:
        e.show()
        sys.exit(e.exit_code)
    except InputError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(2)
    except BenchmarkError as e:
        click.echo(f"error: {e}", err=True)
        sys.exit(1)
    sys.exit(0)


if __name__ == "__main__":
    main()
