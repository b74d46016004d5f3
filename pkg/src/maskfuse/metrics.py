"""Segmentation quality measures: region overlap, boundary agreement, and
their sequence-level aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import iou_mask


def j_measure(pred: np.ndarray, gt: np.ndarray) -> float:
    """Region similarity: plain mask IoU (two empty masks score 1)."""
    return iou_mask(pred, gt)


def mask_boundary(mask: np.ndarray) -> np.ndarray:
    """Foreground pixels 4-adjacent to background; the image border counts
    as background."""
    m = np.asarray(mask, dtype=bool)
    p = np.pad(m, 1, constant_values=False)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return m & ~interior


def chebyshev_dilate(mask: np.ndarray, radius: int) -> np.ndarray:
    """Dilation by a square ball: radius applications of a 3x3 max filter."""
    d = np.asarray(mask, dtype=bool).copy()
    for _ in range(int(radius)):
        p = np.pad(d, 1, constant_values=False)
        d = (p[1:-1, 1:-1] | p[:-2, 1:-1] | p[2:, 1:-1] | p[1:-1, :-2] | p[1:-1, 2:]
             | p[:-2, :-2] | p[:-2, 2:] | p[2:, :-2] | p[2:, 2:])
    return d


def chebyshev_erode(mask: np.ndarray, radius: int) -> np.ndarray:
    """Erosion by a square ball; pixels beyond the border count as foreground
    so the frame edge does not eat into the mask."""
    d = np.asarray(mask, dtype=bool).copy()
    for _ in range(int(radius)):
        p = np.pad(d, 1, constant_values=True)
        d = (p[1:-1, 1:-1] & p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
             & p[:-2, :-2] & p[:-2, 2:] & p[2:, :-2] & p[2:, 2:])
    return d


def default_tolerance(shape_hw: tuple[int, int]) -> int:
    h, w = shape_hw
    return int(round(0.008 * math.hypot(h, w)))


def f_measure(pred: np.ndarray, gt: np.ndarray, tol: int | None = None) -> float:
    """Boundary agreement with a distance tolerance.

    A boundary pixel matches when some boundary pixel of the other mask lies
    within Chebyshev distance tol (default: 0.8% of the image diagonal,
    rounded). F is the harmonic mean of boundary precision and recall; two
    boundary-less masks agree perfectly.
    """
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    pb = mask_boundary(pred)
    gb = mask_boundary(gt)
    np_b = int(pb.sum())
    ng_b = int(gb.sum())
    if np_b == 0 and ng_b == 0:
        return 1.0
    if tol is None:
        tol = default_tolerance(pred.shape)
    g_reach = chebyshev_dilate(gb, tol) if tol > 0 else gb
    p_reach = chebyshev_dilate(pb, tol) if tol > 0 else pb
    precision = float((pb & g_reach).sum() / np_b) if np_b else 0.0
    recall = float((gb & p_reach).sum() / ng_b) if ng_b else 0.0
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


@dataclass
class SequenceScore:
    per_object_j: dict[int, float]
    per_object_f: dict[int, float]
    j_mean: float
    f_mean: float
    g_mean: float
    frames_scored: int


def evaluate_sequence(pred_frames: list[dict[int, np.ndarray]],
                      gt_frames: list[dict[int, np.ndarray]],
                      tol: int | None = None) -> SequenceScore:
    """Score a sequence of per-object masks against ground truth.

    Frame 0 carries the given annotation and is excluded. Scores average per
    object over frames, then over objects; the summary measure is the plain
    mean of the two aggregates.
    """
    if len(pred_frames) != len(gt_frames):
        raise ValueError(f"{len(pred_frames)} predicted frames vs {len(gt_frames)} ground-truth frames")
    if len(gt_frames) < 2:
        raise ValueError("need at least two frames to score (frame 0 is excluded)")
    ids = sorted(gt_frames[1].keys())
    j_acc: dict[int, list[float]] = {k: [] for k in ids}
    f_acc: dict[int, list[float]] = {k: [] for k in ids}
    for t in range(1, len(gt_frames)):
        for k in ids:
            if k not in gt_frames[t]:
                raise ValueError(f"object {k} missing from ground truth at frame {t}")
            if k not in pred_frames[t]:
                raise ValueError(f"object {k} missing from predictions at frame {t}")
            j_acc[k].append(j_measure(pred_frames[t][k], gt_frames[t][k]))
            f_acc[k].append(f_measure(pred_frames[t][k], gt_frames[t][k], tol))
    per_j = {k: float(np.mean(v)) for k, v in j_acc.items()}
    per_f = {k: float(np.mean(v)) for k, v in f_acc.items()}
    j_mean = float(np.mean(list(per_j.values())))
    f_mean = float(np.mean(list(per_f.values())))
    return SequenceScore(per_j, per_f, j_mean, f_mean, (j_mean + f_mean) / 2.0, len(gt_frames) - 1)
