"""Segmentation metrics: per-class IoU, mIoU, and per-product FB-IoU.

Counts are accumulated per class and per product, so ledgers from parallel
workers merge by plain addition and the reported numbers are independent of
episode ordering and partitioning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import InputError


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """|pred & gt| / |pred | gt|; 1.0 when both masks are empty."""
    if pred.shape != gt.shape:
        raise InputError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    p, g = pred > 0, gt > 0
    union = int((p | g).sum())
    if union == 0:
        return 1.0
    return int((p & g).sum()) / union


@dataclass
class MetricLedger:
    # (product, class) -> [intersection, union]
    class_counts: dict[tuple[str, str], list[int]] = field(default_factory=dict)
    # product -> [fg_inter, fg_union, bg_inter, bg_union]
    product_counts: dict[str, list[int]] = field(default_factory=dict)

    def accumulate(
        self, product: str, cls: str, pred: np.ndarray, gt: np.ndarray
    ) -> None:
        if pred.shape != gt.shape:
            raise InputError(
                f"shape mismatch: pred {pred.shape} vs gt {gt.shape}"
            )
        p, g = pred > 0, gt > 0
        fi, fu = int((p & g).sum()), int((p | g).sum())
        bi, bu = int((~p & ~g).sum()), int((~p | ~g).sum())
        cc = self.class_counts.setdefault((product, cls), [0, 0])
        cc[0] += fi
        cc[1] += fu
        pc = self.product_counts.setdefault(product, [0, 0, 0, 0])
        for k, v in enumerate((fi, fu, bi, bu)):
            pc[k] += v

    def merge(self, other: "MetricLedger") -> None:
        for key, (i, u) in other.class_counts.items():
            cc = self.class_counts.setdefault(key, [0, 0])
            cc[0] += i
            cc[1] += u
        for prod, counts in other.product_counts.items():
            pc = self.product_counts.setdefault(prod, [0, 0, 0, 0])
            for k in range(4):
                pc[k] += counts[k]


def _ratio(inter: int, union: int) -> float:
    return 1.0 if union == 0 else inter / union


def report(ledger: MetricLedger, pooled_fb: bool = False) -> dict:
    """Summarize a ledger.

    Per-class IoU comes from accumulated counts; mIoU is their unweighted
    mean. FB-IoU is computed per product and averaged across products by
    default; ``pooled_fb`` pools all products' pixels instead.
    """
    if not ledger.class_counts:
        raise InputError("cannot report on an empty ledger")
    per_class = {
        f"{prod}/{cls}": _ratio(i, u)
        for (prod, cls), (i, u) in sorted(ledger.class_counts.items())
    }
    miou = float(np.mean(list(per_class.values())))
    per_product_fb = {}
    for prod, (fi, fu, bi, bu) in sorted(ledger.product_counts.items()):
        per_product_fb[prod] = 0.5 * (_ratio(fi, fu) + _ratio(bi, bu))
    if pooled_fb:
        totals = [0, 0, 0, 0]
        for counts in ledger.product_counts.values():
            for k in range(4):
                totals[k] += counts[k]
        mean_fb = 0.5 * (_ratio(totals[0], totals[1]) + _ratio(totals[2], totals[3]))
    else:
        mean_fb = float(np.mean(list(per_product_fb.values())))
    return {
        "per_class_iou": per_class,
        "miou": miou,
        "per_product_fb_iou": per_product_fb,
        "mean_fb_iou": mean_fb,
    }
