"""Report serialization: JSON document, delimited tables, and figures."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def write_report(doc: dict, out_dir: Path | str) -> Path:
    """Write report.json plus CSV tables and bar-chart figures; returns the
    JSON path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "report.json"
    json_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")

    payload = doc["payload"]
    per_class = payload["per_class_iou"]
    per_product = payload["per_product_fb_iou"]

    with open(out_dir / "per_class_iou.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class", "iou"])
        for name, value in per_class.items():
            w.writerow([name, f"{value:.6f}"])
        w.writerow(["mIoU", f"{payload['miou']:.6f}"])

    with open(out_dir / "per_product_fb_iou.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["product", "fb_iou"])
        for name, value in per_product.items():
            w.writerow([name, f"{value:.6f}"])
        w.writerow(["mean", f"{payload['mean_fb_iou']:.6f}"])

    _bar_chart(
        per_class, payload["miou"], "per-class IoU", out_dir / "per_class_iou.png"
    )
    _bar_chart(
        per_product,
        payload["mean_fb_iou"],
        "per-product FB-IoU",
        out_dir / "per_product_fb_iou.png",
    )
    return json_path


def _bar_chart(values: dict, mean: float, title: str, path: Path) -> None:
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(values) + 2), 3.5))
    names = list(values)
    ax.bar(range(len(names)), [values[n] for n in names], color="#4878a8")
    ax.axhline(mean, color="#c44e52", linestyle="--", label=f"mean = {mean:.3f}")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=45, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
