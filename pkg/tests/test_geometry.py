"""Boxes, mask IoU, and the crop/resample/paste primitives."""
import math

import numpy as np
import pytest

from maskfuse.geometry import (
    BBox,
    bbox_of_mask,
    binarize,
    crop_resize,
    expand_box,
    iou_box,
    iou_mask,
    paste_into_void,
    raster_box,
)


def naive_resample(src, out_h, out_w, mode):
    """Straightforward per-pixel resampler used as an oracle.

    Sample positions sit at pixel centers: output pixel i reads source
    position (i + 0.5) * in / out - 0.5. Nearest rounds half up, bilinear
    clamps corner indices at the edges.
    """
    src = np.asarray(src, dtype=np.float64)
    in_h, in_w = src.shape
    out = np.zeros((out_h, out_w))
    for i in range(out_h):
        for j in range(out_w):
            sy = (i + 0.5) * in_h / out_h - 0.5
            sx = (j + 0.5) * in_w / out_w - 0.5
            if mode == "nearest":
                yy = min(in_h - 1, max(0, math.floor(sy + 0.5)))
                xx = min(in_w - 1, max(0, math.floor(sx + 0.5)))
                out[i, j] = src[yy, xx]
            else:
                y0 = math.floor(sy)
                x0 = math.floor(sx)
                wy = sy - y0
                wx = sx - x0
                y0c = min(in_h - 1, max(0, y0))
                y1c = min(in_h - 1, max(0, y0 + 1))
                x0c = min(in_w - 1, max(0, x0))
                x1c = min(in_w - 1, max(0, x0 + 1))
                out[i, j] = ((1 - wy) * (1 - wx) * src[y0c, x0c]
                             + (1 - wy) * wx * src[y0c, x1c]
                             + wy * (1 - wx) * src[y1c, x0c]
                             + wy * wx * src[y1c, x1c])
    return out


# -- boxes -------------------------------------------------------------------

def test_iou_box_half_shift():
    # inter 5*10=50, union 150
    assert iou_box(BBox(0, 0, 10, 10), BBox(5, 0, 15, 10)) == pytest.approx(1 / 3)


def test_iou_box_disjoint_and_identical():
    assert iou_box(BBox(0, 0, 4, 4), BBox(10, 10, 14, 14)) == 0.0
    assert iou_box(BBox(2, 3, 7, 9), BBox(2, 3, 7, 9)) == 1.0


def test_iou_box_degenerate_union_is_zero():
    assert iou_box(BBox(1, 1, 1, 5), BBox(1, 1, 1, 5)) == 0.0


def test_iou_box_symmetry_and_range():
    rng = np.random.default_rng(5)
    for _ in range(200):
        a = np.sort(rng.uniform(0, 30, 4))
        b = np.sort(rng.uniform(0, 30, 4))
        ba = BBox(a[0], a[2], a[1], a[3])
        bb = BBox(b[0], b[2], b[1], b[3])
        v = iou_box(ba, bb)
        assert v == iou_box(bb, ba)
        assert 0.0 <= v <= 1.0


def test_iou_box_matches_fine_rasterization():
    rng = np.random.default_rng(6)
    for _ in range(30):
        a = np.sort(rng.integers(0, 40, 4).astype(float))
        b = np.sort(rng.integers(0, 40, 4).astype(float))
        ba = BBox(a[0], a[2], a[1] + 1, a[3] + 1)
        bb = BBox(b[0], b[2], b[1] + 1, b[3] + 1)
        grid_a = np.zeros((50, 50), dtype=bool)
        grid_b = np.zeros((50, 50), dtype=bool)
        ya0, ya1, xa0, xa1 = raster_box(ba, (50, 50))
        yb0, yb1, xb0, xb1 = raster_box(bb, (50, 50))
        grid_a[ya0:ya1, xa0:xa1] = True
        grid_b[yb0:yb1, xb0:xb1] = True
        min_side = min(ba.width, ba.height, bb.width, bb.height)
        assert iou_box(ba, bb) == pytest.approx(iou_mask(grid_a, grid_b),
                                                abs=2.0 / min_side)


# -- mask iou ----------------------------------------------------------------

def test_iou_mask_halves():
    left = np.zeros((8, 8), dtype=bool)
    left[:, :4] = True
    top = np.zeros((8, 8), dtype=bool)
    top[:4, :] = True
    assert iou_mask(left, top) == pytest.approx(16 / 48)


def test_iou_mask_both_empty_is_one():
    e = np.zeros((5, 5), dtype=bool)
    assert iou_mask(e, e) == 1.0


def test_iou_mask_shape_mismatch_raises():
    with pytest.raises(ValueError):
        iou_mask(np.zeros((4, 4), dtype=bool), np.zeros((4, 5), dtype=bool))


def test_iou_mask_symmetry_and_identity():
    rng = np.random.default_rng(7)
    for _ in range(50):
        a = rng.random((9, 9)) < 0.4
        b = rng.random((9, 9)) < 0.4
        assert iou_mask(a, b) == iou_mask(b, a)
        if a.any():
            assert iou_mask(a, a) == 1.0


# -- bbox_of_mask / expand / raster ------------------------------------------

def test_bbox_of_mask_empty_is_none():
    assert bbox_of_mask(np.zeros((6, 6), dtype=bool)) is None


def test_bbox_of_mask_full_frame():
    assert bbox_of_mask(np.ones((7, 9), dtype=bool)) == BBox(0, 0, 9, 7)


def test_bbox_of_mask_single_pixel():
    m = np.zeros((10, 10), dtype=bool)
    m[3, 5] = True
    assert bbox_of_mask(m) == BBox(5, 3, 6, 4)


def test_expand_box_fifteen_percent():
    out = expand_box(BBox(10, 10, 20, 20), 0.15, (100, 100))
    assert out == pytest.approx((8.5, 8.5, 21.5, 21.5))


def test_expand_box_clamps_to_bounds():
    out = expand_box(BBox(0, 0, 10, 10), 0.5, (12, 12))
    assert out.x_min == 0.0 and out.y_min == 0.0
    assert out.x_max == 12.0 and out.y_max == 12.0


def test_raster_box_floor_ceil_clip():
    assert raster_box(BBox(1.2, 2.7, 5.1, 6.0), (20, 20)) == (2, 6, 1, 6)
    assert raster_box(BBox(-3.0, -1.0, 50.0, 2.5), (10, 10)) == (0, 3, 0, 10)


# -- resampling --------------------------------------------------------------

def test_identity_crop_nearest():
    rng = np.random.default_rng(0)
    g = rng.random((12, 15))
    out = crop_resize(g, BBox(0, 0, 15, 12), (12, 15), "nearest")
    assert np.array_equal(out, g)


def test_identity_crop_bilinear():
    rng = np.random.default_rng(1)
    g = rng.random((10, 10))
    out = crop_resize(g, BBox(0, 0, 10, 10), (10, 10), "bilinear")
    assert np.allclose(out, g)


def test_bilinear_two_by_two_column_ramp():
    g = np.array([[0.0, 1.0], [0.0, 1.0]])
    out = crop_resize(g, BBox(0, 0, 2, 2), (2, 4), "bilinear")
    assert np.allclose(out[0], [0.0, 0.25, 0.75, 1.0])
    assert np.allclose(out[1], out[0])


def test_resample_matches_naive_oracle():
    rng = np.random.default_rng(2)
    for _ in range(60):
        in_h = int(rng.integers(2, 14))
        in_w = int(rng.integers(2, 14))
        out_h = int(rng.integers(2, 14))
        out_w = int(rng.integers(2, 14))
        g = rng.random((in_h, in_w))
        for mode in ("nearest", "bilinear"):
            got = crop_resize(g, BBox(0, 0, in_w, in_h), (out_h, out_w), mode)
            want = naive_resample(g, out_h, out_w, mode)
            assert np.allclose(got, want, atol=1e-12), mode


def test_crop_resize_fractional_box_matches_naive_on_raster():
    rng = np.random.default_rng(3)
    g = rng.random((20, 24))
    box = BBox(3.4, 2.6, 17.2, 15.9)
    y0, y1, x0, x1 = raster_box(box, g.shape)
    for mode in ("nearest", "bilinear"):
        got = crop_resize(g, box, (8, 9), mode)
        want = naive_resample(g[y0:y1, x0:x1], 8, 9, mode)
        assert np.allclose(got, want, atol=1e-12)


def test_crop_resize_channels_first():
    rng = np.random.default_rng(4)
    g = rng.random((3, 16, 16))
    out = crop_resize(g, BBox(2, 2, 14, 14), (8, 8), "bilinear")
    assert out.shape == (3, 8, 8)
    for c in range(3):
        single = crop_resize(g[c], BBox(2, 2, 14, 14), (8, 8), "bilinear")
        assert np.allclose(out[c], single)


def test_crop_resize_unit_range_is_preserved():
    rng = np.random.default_rng(8)
    for _ in range(30):
        g = rng.random((11, 13))
        out = crop_resize(g, BBox(1.5, 0.5, 11.2, 10.8), (6, 7), "bilinear")
        assert out.min() >= 0.0 and out.max() <= 1.0


def test_crop_resize_empty_raster_raises():
    with pytest.raises(ValueError):
        crop_resize(np.ones((8, 8)), BBox(20, 20, 25, 25), (4, 4), "nearest")


# -- pasting -----------------------------------------------------------------

def test_paste_empty_crop_gives_zero_canvas():
    out = paste_into_void(np.zeros((4, 4)), BBox(2, 2, 6, 6), (10, 10), "nearest")
    assert not out.any()


def test_paste_constant_block_pixel_count():
    out = paste_into_void(np.ones((10, 14)), BBox(30, 20, 44, 30), (64, 64), "nearest")
    assert int((out >= 0.5).sum()) == 10 * 14


def test_paste_integer_aligned_round_trip_preserves_count():
    rng = np.random.default_rng(9)
    for _ in range(20):
        m = rng.random((40, 40)) < 0.3
        box = bbox_of_mask(m)
        if box is None:
            continue
        y0, y1, x0, x1 = raster_box(box, m.shape)
        crop = crop_resize(m.astype(np.float64), box, (y1 - y0, x1 - x0), "nearest")
        back = paste_into_void(crop, box, m.shape, "nearest") >= 0.5
        assert int(back.sum()) == int(m.sum())
        assert np.array_equal(back, m)


# -- binarize ----------------------------------------------------------------

def test_binarize_is_strictly_greater():
    v = np.array([0.0, 0.2, 0.2000001, 1.0])
    out = binarize(v, 0.2)
    assert out.tolist() == [False, False, True, True]
