"""Fusing the coarse matching result with zero-shot mask proposals.

Proposals sufficiently overlapped by the coarse mask are selected; coarse
components sufficiently covered by a dilated selected proposal are replaced
by it (proposals usually carry crisper boundaries); everything else is kept.
Alternative strategies (no fusion, proposals only, plain union) are
selectable for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import InputError
from .maskops import ComponentSet, ProposalSet, connected_components, dilate

STRATEGIES = ("none", "sam_only", "simple_union", "paper")


@dataclass(frozen=True)
class FusionConfig:
    tau1: float = 0.2
    tau2: float = 0.9
    dilation_k: int = 21
    strategy: str = "paper"

    def __post_init__(self):
        if not 0.0 <= self.tau1 <= 1.0:
            raise InputError(f"tau1 must be in [0,1], got {self.tau1}")
        if not 0.0 <= self.tau2 <= 1.0:
            raise InputError(f"tau2 must be in [0,1], got {self.tau2}")
        if self.dilation_k < 1 or self.dilation_k % 2 == 0:
            raise InputError(f"dilation kernel must be odd, got {self.dilation_k}")
        if self.strategy not in STRATEGIES:
            raise InputError(f"unknown fusion strategy: {self.strategy}")


@dataclass(frozen=True)
class FusionResult:
    mask: np.ndarray  # final R
    sam_mask: np.ndarray  # union of selected proposals
    selected: ProposalSet
    retained: ComponentSet


def select_masks(props: ProposalSet, coarse: np.ndarray, tau1: float) -> ProposalSet:
    """Keep proposals whose overlap-with-coarse fraction strictly exceeds
    tau1."""
    keep_masks, keep_confs = [], []
    for m, c in zip(props.masks, props.confidences):
        if m.shape != coarse.shape:
            raise InputError(
                f"proposal shape {m.shape} does not match coarse {coarse.shape}"
            )
        area = int((m > 0).sum())
        overlap = int(((m > 0) & (coarse > 0)).sum())
        if overlap / area > tau1:
            keep_masks.append(m)
            keep_confs.append(c)
    return ProposalSet(tuple(keep_masks), tuple(keep_confs), disjoint=props.disjoint)


def retain_components(
    coarse: np.ndarray, selected: ProposalSet, tau2: float, dilation_k: int
) -> ComponentSet:
    """Retain the coarse components not sufficiently covered (>= tau2) by any
    individual dilated selected proposal."""
    comps = connected_components(coarse)
    if not selected.masks:
        return comps
    dilated = [dilate(m, dilation_k) > 0 for m in selected.masks]
    retained = []
    for region in comps.regions:
        r = region > 0
        size = int(r.sum())
        dropped = any(int((d & r).sum()) / size >= tau2 for d in dilated)
        if not dropped:
            retained.append(region)
    return ComponentSet(tuple(retained))


def fuse(coarse: np.ndarray, props: ProposalSet, cfg: FusionConfig) -> FusionResult:
    """Produce the final mask per the configured strategy."""
    if not props.disjoint:
        raise InputError("fuse requires a de-overlapped ProposalSet")
    selected = select_masks(props, coarse, cfg.tau1)
    sam_mask = np.zeros_like(coarse, dtype=np.uint8)
    for m in selected.masks:
        sam_mask |= (m > 0).astype(np.uint8)

    coarse_bin = (coarse > 0).astype(np.uint8)
    if cfg.strategy == "none":
        retained = ComponentSet(())
        final = coarse_bin
    elif cfg.strategy == "sam_only":
        retained = ComponentSet(())
        final = sam_mask
    elif cfg.strategy == "simple_union":
        retained = ComponentSet(())
        final = coarse_bin | sam_mask
    else:
        retained = retain_components(coarse_bin, selected, cfg.tau2, cfg.dilation_k)
        final = sam_mask.copy()
        for region in retained.regions:
            final |= region
    return FusionResult(final, sam_mask, selected, retained)
