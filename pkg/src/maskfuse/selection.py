"""Scoring and selection of the reconstructed candidate masks.

A candidate is scored against two anchors: how well its tight box matches
the motion-predicted box, and how much it overlaps the warped previous-frame
mask. The weighted sum of the two ranks the candidates.
"""
from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from .geometry import BBox, bbox_of_mask, iou_box, iou_mask
from .motion import PredictedBox


class SelectionScore(NamedTuple):
    box_term: float
    prop_term: float
    total: float


def _target_box(target) -> Optional[BBox]:
    if target is None:
        return None
    if isinstance(target, PredictedBox):
        return target.to_box()
    return BBox(*target)


def score(mask: np.ndarray, box_target, prior: np.ndarray,
          lambda1: float, lambda2: float) -> SelectionScore:
    """Score one binary candidate. An empty candidate (or missing box target)
    contributes zero through the box term; the prior term is plain mask IoU."""
    mask = np.asarray(mask, dtype=bool)
    prior = np.asarray(prior, dtype=bool)
    if mask.shape != prior.shape:
        raise ValueError(f"candidate and prior shapes differ: {mask.shape} vs {prior.shape}")
    cand_box = bbox_of_mask(mask)
    tbox = _target_box(box_target)
    box_term = iou_box(cand_box, tbox) if cand_box is not None and tbox is not None else 0.0
    prop_term = iou_mask(mask, prior)
    return SelectionScore(box_term, prop_term, lambda1 * box_term + lambda2 * prop_term)


def score_candidates(masks, box_target, prior, lambda1: float, lambda2: float) -> list[SelectionScore]:
    return [score(m, box_target, prior, lambda1, lambda2) for m in masks]


def select(masks, box_target, prior, lambda1: float, lambda2: float) -> tuple[int, np.ndarray]:
    """Pick the highest-scoring candidate; exact ties resolve to the lowest index."""
    if len(masks) == 0:
        raise ValueError("no candidates to select from")
    scores = score_candidates(masks, box_target, prior, lambda1, lambda2)
    best = 0
    for i in range(1, len(scores)):
        if scores[i].total > scores[best].total:
            best = i
    return best, np.asarray(masks[best], dtype=bool)
