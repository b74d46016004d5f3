"""Constant-velocity box tracks: prediction and proposal assignment."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

from .geometry import BBox, iou_box


class PredictedBox(NamedTuple):
    center: tuple[float, float]
    size: tuple[float, float]

    def to_box(self) -> BBox:
        cx, cy = self.center
        w, h = self.size
        return BBox(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)


@dataclass
class TrackState:
    """Per-object box history. Only the last history_n entries feed prediction."""
    object_id: int
    history_n: int = 10
    centers: list[tuple[float, float]] = field(default_factory=list)
    sizes: list[tuple[float, float]] = field(default_factory=list)


def update_track(track: TrackState, box) -> TrackState:
    """Append the center and size of a box to the track history."""
    x0, y0, x1, y1 = box
    track.centers.append(((x0 + x1) / 2.0, (y0 + y1) / 2.0))
    track.sizes.append((x1 - x0, y1 - y0))
    return track


def predict(track: TrackState) -> PredictedBox:
    """Extrapolate the next box: last center plus the mean of the most recent
    center deltas, with the size averaged over the recent history. A single
    entry predicts itself (zero velocity)."""
    if not track.centers:
        raise ValueError(f"track {track.object_id} has no history")
    n = track.history_n
    cs = track.centers
    k = min(n, len(cs) - 1)
    vx = vy = 0.0
    if k > 0:
        for (x0, y0), (x1, y1) in zip(cs[-k - 1:-1], cs[-k:]):
            vx += x1 - x0
            vy += y1 - y0
        vx /= k
        vy /= k
    m = min(n, len(track.sizes))
    sw = sum(s[0] for s in track.sizes[-m:]) / m
    sh = sum(s[1] for s in track.sizes[-m:]) / m
    return PredictedBox((cs[-1][0] + vx, cs[-1][1] + vy), (sw, sh))


def last_box(track: TrackState) -> PredictedBox:
    """The most recent box verbatim, used when motion extrapolation is disabled."""
    if not track.centers:
        raise ValueError(f"track {track.object_id} has no history")
    return PredictedBox(track.centers[-1], track.sizes[-1])


def _as_box(pred) -> BBox:
    return pred.to_box() if isinstance(pred, PredictedBox) else BBox(*pred)


def assign_proposals(boxes, predictions: dict[int, object], tau: float) -> dict[int, list[int]]:
    """Greedy exclusive assignment of proposal boxes to predicted boxes.

    Each proposal goes to the object whose prediction it overlaps most,
    provided that IoU strictly exceeds tau; otherwise it is discarded.
    Ties go to the lowest object id. Returns object_id -> proposal indices
    (objects with no assignment are omitted).
    """
    pred_boxes = [(oid, _as_box(p)) for oid, p in sorted(predictions.items())]
    out: dict[int, list[int]] = {}
    for i, b in enumerate(boxes):
        best = tau
        best_oid = None
        for oid, pb in pred_boxes:
            v = iou_box(b, pb)
            if v > best:
                best = v
                best_oid = oid
        if best_oid is not None:
            out.setdefault(best_oid, []).append(i)
    return out
