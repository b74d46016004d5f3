"""Engine behaviour: frame 0 seeding, fusion passes, fallbacks, losses."""
import math

import numpy as np
import pytest

from maskfuse.geometry import BBox, bbox_of_mask, iou_mask, raster_box
from maskfuse.pipeline import (
    Engine,
    EngineConfig,
    FrameData,
    PipelineError,
    Proposal,
    diagnostic_loss,
    resolve_overlaps,
    run_video,
)


def block(h, w, y0, y1, x0, x1):
    m = np.zeros((h, w), dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


def plus_shape(h, w, cy, cx, arm=12, thick=4):
    m = np.zeros((h, w), dtype=bool)
    m[cy - thick:cy + thick, cx - arm:cx + arm] = True
    m[cy - arm:cy + arm, cx - thick:cx + thick] = True
    return m


def proposal_of(mask, feature=None, shape=None):
    box = bbox_of_mask(mask)
    y0, y1, x0, x1 = raster_box(box, mask.shape)
    feat = np.ones(4) if feature is None else np.asarray(feature, dtype=float)
    return Proposal(box, mask[y0:y1, x0:x1], feat, 1.0)


# -- config ------------------------------------------------------------------

def test_default_config_validates():
    EngineConfig().validate()


def test_bad_config_values_raise():
    with pytest.raises(ValueError):
        EngineConfig(iters=0).validate()
    with pytest.raises(ValueError):
        EngineConfig(thr=1.5).validate()
    with pytest.raises(ValueError):
        EngineConfig(threads=0).validate()


# -- overlap resolution ------------------------------------------------------

def test_resolve_no_overlap_is_identity():
    a = block(10, 10, 0, 4, 0, 4)
    b = block(10, 10, 6, 10, 6, 10)
    label, resolved = resolve_overlaps({1: a, 2: b},
                                       {1: a.astype(float), 2: b.astype(float)})
    assert np.array_equal(resolved[1], a)
    assert np.array_equal(resolved[2], b)
    assert set(np.unique(label).tolist()) == {0, 1, 2}


def test_resolve_contested_pixel_goes_to_stronger_evidence():
    a = block(6, 6, 0, 4, 0, 4)
    b = block(6, 6, 2, 6, 2, 6)
    sa = np.where(a, 0.4, 0.0)
    sb = np.where(b, 0.9, 0.0)
    label, resolved = resolve_overlaps({1: a, 2: b}, {1: sa, 2: sb})
    assert label[3, 3] == 2
    assert not resolved[1][3, 3]
    assert resolved[2][3, 3]


def test_resolve_exact_tie_goes_to_lower_id():
    a = block(6, 6, 0, 4, 0, 4)
    b = a.copy()
    soft = np.where(a, 0.5, 0.0)
    label, resolved = resolve_overlaps({2: b, 1: a}, {2: soft.copy(), 1: soft.copy()})
    assert (label[a] == 1).all()
    assert resolved[1].sum() == a.sum()
    assert not resolved[2].any()


def test_resolved_masks_decompose_label_map():
    rng = np.random.default_rng(0)
    masks = {k: rng.random((12, 12)) < 0.4 for k in (1, 2, 3)}
    softs = {k: rng.random((12, 12)) for k in (1, 2, 3)}
    label, resolved = resolve_overlaps(masks, softs)
    for k, m in resolved.items():
        assert np.array_equal(m, label == k)


# -- diagnostic loss ---------------------------------------------------------

def test_distance_term_zero_when_conditionings_coincide():
    gt = block(20, 20, 4, 12, 4, 12)
    cands = [gt.copy(), block(20, 20, 0, 8, 0, 8)]
    cfg = EngineConfig()
    dist, bce, total = diagnostic_loss(cands, gt.astype(float), gt,
                                       bbox_of_mask(gt), gt.copy(), cfg)
    assert dist == 0.0
    assert total == bce


def test_distance_term_positive_when_anchors_differ():
    gt = block(20, 20, 4, 12, 4, 12)
    other = block(20, 20, 10, 18, 10, 18)
    cfg = EngineConfig()
    dist, _, _ = diagnostic_loss([gt.copy()], gt.astype(float), gt,
                                 bbox_of_mask(other), other, cfg)
    assert dist > 0.0


def test_bce_single_foreground_pixel():
    gt = np.ones((1, 1), dtype=bool)
    soft = np.ones((1, 1))
    _, bce, _ = diagnostic_loss([], soft, gt, None, gt.copy(), EngineConfig())
    assert bce == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-5)
    assert bce == pytest.approx(0.31326, abs=1e-5)


def test_bce_single_background_pixel():
    gt = np.zeros((1, 1), dtype=bool)
    soft = np.zeros((1, 1))
    _, bce, _ = diagnostic_loss([], soft, gt, None, np.ones((1, 1), dtype=bool),
                                EngineConfig())
    assert bce == pytest.approx(math.log(2), abs=1e-5)


# -- frame 0 -----------------------------------------------------------------

def uniform_key_map(h, w):
    return np.ones((1, h, w))


def test_frame_zero_seeds_tracks_and_banks():
    a = block(40, 40, 4, 16, 4, 16)
    b = block(40, 40, 22, 36, 22, 36)
    eng = Engine(EngineConfig())
    res = eng.step(FrameData(0, uniform_key_map(40, 40), annotations={1: a, 2: b}))
    assert set(eng.tracks) == {1, 2}
    assert set(eng.banks) == {1, 2}
    assert len(eng.banks[1]) == 1
    assert np.array_equal(res.masks[1], a)
    assert np.array_equal(res.masks[2], b)
    assert eng.tracks[1].centers == [(10.0, 10.0)]
    assert res.fallback == {1: False, 2: False}


def test_frame_zero_overlapping_annotations_rejected():
    a = block(20, 20, 0, 10, 0, 10)
    b = block(20, 20, 5, 15, 5, 15)
    eng = Engine(EngineConfig())
    with pytest.raises(PipelineError, match="overlap"):
        eng.step(FrameData(0, uniform_key_map(20, 20), annotations={1: a, 2: b}))


def test_frame_zero_empty_annotation_rejected():
    eng = Engine(EngineConfig())
    with pytest.raises(PipelineError, match="object 1"):
        eng.step(FrameData(0, uniform_key_map(10, 10),
                           annotations={1: np.zeros((10, 10), dtype=bool)}))


def test_frame_zero_required_first():
    eng = Engine(EngineConfig())
    with pytest.raises(PipelineError):
        eng.step(FrameData(1, uniform_key_map(10, 10)))


def test_out_of_order_frames_rejected():
    a = block(30, 30, 4, 14, 4, 14)
    eng = Engine(EngineConfig())
    eng.step(FrameData(0, uniform_key_map(30, 30), annotations={1: a}))
    with pytest.raises(PipelineError):
        eng.step(FrameData(2, uniform_key_map(30, 30), warped={1: a}))


# -- single frame end to end -------------------------------------------------

def test_exact_proposal_reproduces_mask_through_full_stack():
    h = w = 64
    m = plus_shape(h, w, 32, 32)
    km = uniform_key_map(h, w)
    eng = Engine(EngineConfig())
    eng.step(FrameData(0, km, annotations={1: m}))
    res = eng.step(FrameData(1, km, proposals=[proposal_of(m)], warped={1: m.copy()}))
    assert not res.fallback[1]
    assert res.selected[1] == 0
    assert iou_mask(res.masks[1], m) >= 0.95


def test_zero_proposals_fall_back_to_warped_mask_bit_exactly():
    h = w = 48
    m = block(h, w, 10, 26, 10, 26)
    q = block(h, w, 12, 28, 11, 27)
    km = uniform_key_map(h, w)
    eng = Engine(EngineConfig())
    eng.step(FrameData(0, km, annotations={1: m}))
    res = eng.step(FrameData(1, km, proposals=[], warped={1: q}))
    assert res.fallback[1]
    assert res.selected[1] is None
    assert np.array_equal(res.masks[1], q)


def test_unassignable_proposal_also_falls_back():
    h = w = 60
    m = block(h, w, 4, 20, 4, 20)
    q = block(h, w, 5, 21, 5, 21)
    far = block(h, w, 44, 56, 44, 56)
    km = uniform_key_map(h, w)
    eng = Engine(EngineConfig())
    eng.step(FrameData(0, km, annotations={1: m}))
    res = eng.step(FrameData(1, km, proposals=[proposal_of(far)], warped={1: q}))
    assert res.fallback[1]
    assert np.array_equal(res.masks[1], q)


def test_fallback_output_always_equals_warped_input():
    # fallback masks must not be altered by overlap resolution when objects
    # stay apart
    h, w = 40, 80
    a = block(h, w, 4, 18, 4, 18)
    b = block(h, w, 4, 18, 50, 70)
    qa = block(h, w, 6, 20, 5, 19)
    km = uniform_key_map(h, w)
    eng = Engine(EngineConfig())
    eng.step(FrameData(0, km, annotations={1: a, 2: b}))
    res = eng.step(FrameData(1, km, proposals=[proposal_of(b)],
                             warped={1: qa, 2: b.copy()}))
    assert res.fallback[1] and not res.fallback[2]
    assert np.array_equal(res.masks[1], qa)


def test_label_map_matches_final_masks():
    h, w = 40, 80
    a = block(h, w, 4, 18, 4, 18)
    b = block(h, w, 20, 34, 50, 70)
    km = uniform_key_map(h, w)
    eng = Engine(EngineConfig())
    eng.step(FrameData(0, km, annotations={1: a, 2: b}))
    res = eng.step(FrameData(1, km, proposals=[proposal_of(a), proposal_of(b)],
                             warped={1: a.copy(), 2: b.copy()}))
    for k, m in res.masks.items():
        assert np.array_equal(m, res.label_map == k)
    assert not (res.masks[1] & res.masks[2]).any()


def test_loss_reported_only_with_ground_truth():
    h = w = 48
    m = block(h, w, 10, 30, 10, 30)
    km = uniform_key_map(h, w)
    eng = Engine(EngineConfig())
    eng.step(FrameData(0, km, annotations={1: m}))
    r1 = eng.step(FrameData(1, km, proposals=[proposal_of(m)], warped={1: m.copy()}))
    assert r1.loss is None
    eng2 = Engine(EngineConfig())
    eng2.step(FrameData(0, km, annotations={1: m}))
    r2 = eng2.step(FrameData(1, km, proposals=[proposal_of(m)], warped={1: m.copy()},
                             gt={1: m.copy()}))
    assert r2.loss is not None
    dist, bce, total = r2.loss[1]
    assert total == pytest.approx(dist + bce)


# -- multi-frame -------------------------------------------------------------

def signed_key_map(mask, scale=4.0):
    """Single class channel, positive on the object and negative off it."""
    km = np.zeros((1,) + mask.shape)
    km[0] = np.where(mask, scale, -scale)
    return km


def drift_frames(h, w, steps):
    """Plus shape sliding right one pixel per frame, exact proposals and
    warps, with a per-frame class-signed key map so memory reads stay sharp."""
    masks = [plus_shape(h, w, 24, 18 + t) for t in range(steps)]
    frames = [FrameData(0, signed_key_map(masks[0]), annotations={1: masks[0]})]
    for t in range(1, steps):
        frames.append(FrameData(t, signed_key_map(masks[t]),
                                proposals=[proposal_of(masks[t])],
                                warped={1: masks[t].copy()}))
    return frames, masks


def test_multi_frame_tracking_stays_exact():
    frames, masks = drift_frames(48, 64, 6)
    results = run_video(frames, EngineConfig())
    for t, res in enumerate(results):
        assert iou_mask(res.masks[1], masks[t]) >= 0.95


def test_determinism_across_runs_and_threads():
    frames, _ = drift_frames(48, 64, 5)
    a = run_video(frames, EngineConfig())
    b = run_video(frames, EngineConfig())
    c = run_video(frames, EngineConfig(threads=4))
    for ra, rb, rc in zip(a, b, c):
        assert np.array_equal(ra.masks[1], rb.masks[1])
        assert np.array_equal(ra.masks[1], rc.masks[1])
        assert np.array_equal(ra.label_map, rc.label_map)


def test_causality_prefix_reproduces_prefix():
    frames, _ = drift_frames(48, 64, 6)
    full = run_video(frames, EngineConfig())
    prefix = run_video(frames[:4], EngineConfig())
    for rf, rp in zip(full[:4], prefix):
        assert np.array_equal(rf.masks[1], rp.masks[1])
        assert np.array_equal(rf.label_map, rp.label_map)


def test_memory_cap_bounds_bank_growth():
    frames, _ = drift_frames(48, 64, 8)
    eng = Engine(EngineConfig(max_memory=3))
    for f in frames:
        eng.step(f)
    assert len(eng.banks[1]) <= 3
    assert eng.banks[1].entries[0].frame_index == 0


def test_disabled_stages_still_produce_masks():
    frames, masks = drift_frames(48, 64, 5)
    cfg = EngineConfig(use_motion=False, use_spatial=False, use_temporal=False)
    results = run_video(frames, cfg)
    for t, res in enumerate(results):
        assert iou_mask(res.masks[1], masks[t]) == 1.0
