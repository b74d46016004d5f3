"""Box and mask primitives shared by every stage of the engine.

Coordinates follow image convention: x runs along columns, y along rows.
Boxes are continuous (x_min, y_min, x_max, y_max) with the far edge
exclusive; the pixel at (row, col) occupies [col, col+1) x [row, row+1),
so the tight box of a single pixel at row 3, col 5 is (5, 3, 6, 4).
"""
from __future__ import annotations

import math
from typing import NamedTuple, Optional

import numpy as np


class BBox(NamedTuple):
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return max(0.0, self.width) * max(0.0, self.height)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def size(self) -> tuple[float, float]:
        return (self.width, self.height)


def iou_box(a, b) -> float:
    """Intersection over union of two continuous boxes; 0 when the union is empty."""
    ax0, ay0, ax1, ay1 = a
    bx0, by0, bx1, by1 = b
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    inter = max(0.0, iw) * max(0.0, ih)
    area_a = max(0.0, ax1 - ax0) * max(0.0, ay1 - ay0)
    area_b = max(0.0, bx1 - bx0) * max(0.0, by1 - by0)
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return float(inter / union)


def iou_mask(a: np.ndarray, b: np.ndarray) -> float:
    """Set IoU of two binary masks. Two empty masks count as identical (1.0)."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    inter = np.count_nonzero(a & b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return float(inter / union)


def bbox_of_mask(mask: np.ndarray) -> Optional[BBox]:
    """Tight box of the foreground, exclusive far edge. None for an empty mask."""
    mask = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        return None
    return BBox(float(xs.min()), float(ys.min()), float(xs.max() + 1), float(ys.max() + 1))


def expand_box(box, margin: float, bounds_hw: tuple[int, int]) -> BBox:
    """Grow a box by margin * side length on each side, clamped to the frame.

    bounds_hw is (height, width); the result stays within [0, W] x [0, H].
    """
    x0, y0, x1, y1 = box
    h, w = bounds_hw
    dx = margin * (x1 - x0)
    dy = margin * (y1 - y0)
    return BBox(
        max(0.0, x0 - dx),
        max(0.0, y0 - dy),
        min(float(w), x1 + dx),
        min(float(h), y1 + dy),
    )


def raster_box(box, bounds_hw: tuple[int, int]) -> tuple[int, int, int, int]:
    """Integer pixel span of a continuous box: floor the min edge, ceil the max,
    clipped to the frame. Returns (y0, y1, x0, x1); empty spans are possible."""
    x0, y0, x1, y1 = box
    h, w = bounds_hw
    ix0 = max(0, int(math.floor(x0)))
    iy0 = max(0, int(math.floor(y0)))
    ix1 = min(w, int(math.ceil(x1)))
    iy1 = min(h, int(math.ceil(y1)))
    return iy0, iy1, ix0, ix1


def _resample(src: np.ndarray, out_h: int, out_w: int, mode: str) -> np.ndarray:
    """Resample the trailing two axes of src to (out_h, out_w).

    Pixel-center convention: output pixel i samples source coordinate
    (i + 0.5) * len / out_len - 0.5 with edge clamping, so a same-size
    resample is the identity for both modes.
    """
    h, w = src.shape[-2], src.shape[-1]
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"invalid resample target ({out_h}, {out_w})")
    if mode == "nearest":
        yi = np.minimum(((np.arange(out_h) + 0.5) * h / out_h).astype(np.int64), h - 1)
        xi = np.minimum(((np.arange(out_w) + 0.5) * w / out_w).astype(np.int64), w - 1)
        return src[..., yi[:, None], xi[None, :]]
    if mode != "bilinear":
        raise ValueError(f"unknown resample mode {mode!r}")
    fy = (np.arange(out_h) + 0.5) * h / out_h - 0.5
    fx = (np.arange(out_w) + 0.5) * w / out_w - 0.5
    y0 = np.floor(fy).astype(np.int64)
    x0 = np.floor(fx).astype(np.int64)
    wy = (fy - y0)[:, None]
    wx = (fx - x0)[None, :]
    y0c = np.clip(y0, 0, h - 1)
    y1c = np.clip(y0 + 1, 0, h - 1)
    x0c = np.clip(x0, 0, w - 1)
    x1c = np.clip(x0 + 1, 0, w - 1)
    top = src[..., y0c[:, None], x0c[None, :]] * (1 - wx) + src[..., y0c[:, None], x1c[None, :]] * wx
    bot = src[..., y1c[:, None], x0c[None, :]] * (1 - wx) + src[..., y1c[:, None], x1c[None, :]] * wx
    return top * (1 - wy) + bot * wy


def crop_resize(grid: np.ndarray, region, target_hw: tuple[int, int], mode: str = "bilinear") -> np.ndarray:
    """Crop the rasterized region out of a (H, W) or (C, H, W) grid and resample
    it to target_hw. Nearest keeps binary values binary; bilinear is convex, so
    values stay inside their input range."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim not in (2, 3):
        raise ValueError(f"expected (H, W) or (C, H, W) grid, got shape {grid.shape}")
    bounds = grid.shape[-2:]
    y0, y1, x0, x1 = raster_box(region, bounds)
    if y1 <= y0 or x1 <= x0:
        raise ValueError(f"region {tuple(region)} rasterizes to no pixels inside {bounds}")
    sub = grid[..., y0:y1, x0:x1]
    return _resample(sub, target_hw[0], target_hw[1], mode)


def paste_into_void(crop: np.ndarray, region, canvas_hw: tuple[int, int], mode: str = "bilinear") -> np.ndarray:
    """Resample a crop back into the rasterized region of an otherwise zero canvas."""
    crop = np.asarray(crop, dtype=np.float64)
    if crop.ndim != 2:
        raise ValueError(f"expected a (H, W) crop, got shape {crop.shape}")
    canvas = np.zeros(canvas_hw, dtype=np.float64)
    y0, y1, x0, x1 = raster_box(region, canvas_hw)
    if y1 <= y0 or x1 <= x0:
        return canvas
    canvas[y0:y1, x0:x1] = _resample(crop, y1 - y0, x1 - x0, mode)
    return canvas


def binarize(values: np.ndarray, thr: float) -> np.ndarray:
    """Strict threshold: foreground where value > thr."""
    return np.asarray(values) > thr
