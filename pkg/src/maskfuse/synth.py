"""Synthetic benchmark sequences with controllable corruption.

A scene is a handful of textured rigid shapes translating over a flat
background. The generator emits everything a manifest needs: ground truth,
frame-0 annotations, detector-style proposals (optionally partial, jittered
and polluted with spurious blobs), warped previous-frame masks, per-frame
key maps, and per-proposal appearance features.

Key maps carry six channels: normalized x, normalized y, a signed object
signature intensity (positive inside objects, negative background, modulated
by a per-object texture that translates with the object), two Gaussian-blur
variants of the intensity, and a constant bias plane. The signed intensity
makes the dot-product attention of the memory stage class-sharp: foreground
queries land on foreground memory pixels and background queries on
background, which is what lets refinement repair partial masks instead of
blurring them.

Randomness is split into named streams derived from the corpus seed, so
regenerating with one seed is byte-identical regardless of call order.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .formats import write_mask, write_tensor
from .geometry import bbox_of_mask, raster_box
from .metrics import chebyshev_dilate, chebyshev_erode
from .pipeline import EngineConfig, FrameResult, run_video

KEY_CHANNELS = 6


@dataclass
class SynthSpec:
    """Knobs of one generated sequence."""
    height: int = 160
    width: int = 224
    num_objects: int = 2
    frames: int = 20
    motion: str = "linear"               # linear | sine | lanes | cross
    proposals_per_object: int = 4
    coverage: tuple[float, float] = (1.0, 1.0)   # fraction of GT each proposal keeps
    min_union: float = 0.95              # required union coverage of the proposal set
    max_union: float = 1.0               # redraw target cap (leaves repair work for memory)
    bbox_jitter: float = 0.0             # stddev of box corner noise, pixels
    spurious_rate: float = 0.0           # chance of an extra unrelated blob per object-frame
    feature_noise: float = 0.05          # appearance descriptor noise
    feature_dim: int = 16
    warp_radius: int = 0                 # morphological corruption radius for warped masks
    warp_rate: float = 0.0               # chance a warped mask is corrupted
    object_size: tuple[int, int] = (20, 24)
    key_scale: float = 2.0               # signature intensity magnitude
    seed: int = 0

    def validate(self) -> None:
        if self.num_objects < 1 or self.num_objects > 255:
            raise ValueError("num_objects must be in 1..255")
        if self.frames < 2:
            raise ValueError("need at least 2 frames")
        if self.motion not in ("linear", "sine", "lanes", "cross"):
            raise ValueError(f"unknown motion kind {self.motion!r}")
        if self.motion == "cross" and self.num_objects != 2:
            raise ValueError("cross motion is defined for exactly 2 objects")
        if self.motion == "lanes" and self.num_objects * (self.object_size[1] + 6) > self.height:
            raise ValueError("lanes motion needs enough height for one lane per object")
        lo, hi = self.coverage
        if not (0.05 <= lo <= hi <= 1.0):
            raise ValueError(f"bad coverage range {self.coverage}")
        if self.proposals_per_object < 1:
            raise ValueError("proposals_per_object must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "SynthSpec":
        data = json.loads(text)
        spec = SynthSpec(**{k: tuple(v) if isinstance(v, list) else v for k, v in data.items()})
        spec.validate()
        return spec


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


# Stream tags keep the substreams non-overlapping.
_S_SHAPE, _S_PATH, _S_PROPS, _S_SPUR, _S_WARP, _S_FEAT = 1, 2, 3, 4, 5, 6


def _make_stamp(rng: np.random.Generator, size_range: tuple[int, int]) -> np.ndarray:
    """A filled ellipse with a notch cut from one edge; distinct silhouettes."""
    s = int(rng.integers(size_range[0], size_range[1] + 1))
    # Aspect < 1 keeps the longer side at s exactly, so the refinement crop
    # (box grown by the margin ratio) stays within the key grid for the
    # default sizes; a random transpose restores orientation variety.
    aspect = rng.uniform(0.72, 0.97)
    sh = max(12, round(s * aspect))
    sw = max(12, s)
    yy = (np.arange(sh) - (sh - 1) / 2.0) / (sh / 2.0)
    xx = (np.arange(sw) - (sw - 1) / 2.0) / (sw / 2.0)
    stamp = (yy[:, None] ** 2 + xx[None, :] ** 2) <= 1.0
    if rng.random() < 0.7:
        side = int(rng.integers(0, 4))
        depth = int(rng.integers(3, max(4, s // 3)))
        width = int(rng.integers(s // 4, max(s // 4 + 1, s // 2)))
        off = int(rng.integers(0, max(1, (sw if side < 2 else sh) - width)))
        if side == 0:
            stamp[:depth, off:off + width] = False
        elif side == 1:
            stamp[-depth:, off:off + width] = False
        elif side == 2:
            stamp[off:off + width, :depth] = False
        else:
            stamp[off:off + width, -depth:] = False
    if not stamp.any():
        stamp[sh // 2, sw // 2] = True
    if rng.random() < 0.5:
        stamp = stamp.T.copy()
    return stamp


def _make_texture(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    """Smooth per-object pattern in [-1, 1] that rides along with the stamp."""
    ch = max(2, shape[0] // 6)
    cw = max(2, shape[1] // 6)
    coarse = rng.normal(size=(ch, cw))
    from .geometry import _resample
    tex = _resample(coarse, shape[0], shape[1], "bilinear")
    peak = np.abs(tex).max()
    return tex / peak if peak > 0 else tex


def _blur(img: np.ndarray, sigma: float) -> np.ndarray:
    r = int(math.ceil(3 * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    k /= k.sum()
    pad = np.pad(img, ((r, r), (0, 0)), mode="edge")
    tmp = np.zeros_like(img)
    for i, kv in enumerate(k):
        tmp += kv * pad[i:i + img.shape[0], :]
    pad = np.pad(tmp, ((0, 0), (r, r)), mode="edge")
    out = np.zeros_like(img)
    for i, kv in enumerate(k):
        out += kv * pad[:, i:i + img.shape[1]]
    return out


def _paths(spec: SynthSpec, stamps: list[np.ndarray]) -> np.ndarray:
    """Center trajectories, (K, T, 2) as (cx, cy), kept fully inside the frame."""
    rng = _rng(spec.seed, _S_PATH)
    k_n, t_n = spec.num_objects, spec.frames
    out = np.zeros((k_n, t_n, 2), dtype=np.float64)
    if spec.motion == "cross":
        sh0, sw0 = stamps[0].shape
        sh1, sw1 = stamps[1].shape
        row = spec.height / 2.0 + rng.uniform(-8, 8)
        drow = rng.uniform(0.25, 0.45) * max(sh0, sh1) * (1 if rng.random() < 0.5 else -1)
        x_lo0, x_hi0 = sw0 / 2.0 + 2, spec.width - sw0 / 2.0 - 2
        x_lo1, x_hi1 = sw1 / 2.0 + 2, spec.width - sw1 / 2.0 - 2
        for t in range(t_n):
            a = t / (t_n - 1)
            out[0, t] = (x_lo0 + a * (x_hi0 - x_lo0), row)
            out[1, t] = (x_hi1 - a * (x_hi1 - x_lo1), row + drow)
        return out
    if spec.motion == "lanes":
        # One horizontal lane per object; objects can never approach each
        # other, which keeps proposal assignment unambiguous.
        lane_h = spec.height / k_n
        for k in range(k_n):
            sh, sw = stamps[k].shape
            x_lo, x_hi = sw / 2.0 + 2, spec.width - sw / 2.0 - 2
            y_lo = k * lane_h + sh / 2.0 + 1
            y_hi = (k + 1) * lane_h - sh / 2.0 - 1
            cy = (y_lo + y_hi) / 2.0
            amp = min(rng.uniform(2.0, 5.0), max(0.0, (y_hi - y_lo) / 2.0))
            period = rng.uniform(8.0, 16.0)
            phase = rng.uniform(0, 2 * math.pi)
            bx = rng.uniform(x_lo, x_hi)
            vx = rng.uniform(1.5, 3.5) * (1 if rng.random() < 0.5 else -1)
            for t in range(t_n):
                out[k, t] = (bx, cy + amp * math.sin(phase + 2 * math.pi * t / period))
                bx += vx
                if bx < x_lo:
                    bx = 2 * x_lo - bx
                    vx = -vx
                elif bx > x_hi:
                    bx = 2 * x_hi - bx
                    vx = -vx
        return out
    for k in range(k_n):
        sh, sw = stamps[k].shape
        x_lo, x_hi = sw / 2.0 + 2, spec.width - sw / 2.0 - 2
        y_lo, y_hi = sh / 2.0 + 2, spec.height - sh / 2.0 - 2
        # Spawn objects in distinct frame quadrants so they start apart.
        qx = (k % 2)
        qy = (k // 2) % 2
        cx = rng.uniform(x_lo + qx * (x_hi - x_lo) / 2, x_lo + (qx + 1) * (x_hi - x_lo) / 2)
        cy = rng.uniform(y_lo + qy * (y_hi - y_lo) / 2, y_lo + (qy + 1) * (y_hi - y_lo) / 2)
        ang = rng.uniform(0, 2 * math.pi)
        speed = rng.uniform(1.5, 3.5)
        vx, vy = speed * math.cos(ang), speed * math.sin(ang)
        amp = rng.uniform(3.0, 8.0) if spec.motion == "sine" else 0.0
        period = rng.uniform(8.0, 16.0)
        phase = rng.uniform(0, 2 * math.pi)
        px, py = -math.sin(ang), math.cos(ang)
        bx, by = cx, cy
        for t in range(t_n):
            off = amp * math.sin(phase + 2 * math.pi * t / period)
            out[k, t] = (bx + off * px, by + off * py)
            bx += vx
            by += vy
            if bx < x_lo:
                bx = 2 * x_lo - bx
                vx = -vx
            elif bx > x_hi:
                bx = 2 * x_hi - bx
                vx = -vx
            if by < y_lo:
                by = 2 * y_lo - by
                vy = -vy
            elif by > y_hi:
                by = 2 * y_hi - by
                vy = -vy
        out[k, :, 0] = np.clip(out[k, :, 0], x_lo, x_hi)
        out[k, :, 1] = np.clip(out[k, :, 1], y_lo, y_hi)
    return out


def _top_left(center: tuple[float, float], stamp_shape: tuple[int, int]) -> tuple[int, int]:
    sh, sw = stamp_shape
    return (round(center[1] - sh / 2.0), round(center[0] - sw / 2.0))


def _paint(canvas: np.ndarray, stamp: np.ndarray, top_left: tuple[int, int], value) -> None:
    sh, sw = stamp.shape
    h, w = canvas.shape[-2:]
    y0, x0 = top_left
    sy0, sx0 = max(0, -y0), max(0, -x0)
    y0c, x0c = max(0, y0), max(0, x0)
    y1c, x1c = min(h, y0 + sh), min(w, x0 + sw)
    if y1c <= y0c or x1c <= x0c:
        return
    sub = stamp[sy0:sy0 + (y1c - y0c), sx0:sx0 + (x1c - x0c)]
    region = canvas[..., y0c:y1c, x0c:x1c]
    if np.isscalar(value):
        region[..., sub] = value
    else:
        region[..., sub] = value[sy0:sy0 + (y1c - y0c), sx0:sx0 + (x1c - x0c)][sub]


def _render_labels(spec: SynthSpec, stamps, centers_t) -> np.ndarray:
    """Paint objects back to front; lower ids sit in front on overlap."""
    label = np.zeros((spec.height, spec.width), dtype=np.int32)
    for k in range(spec.num_objects - 1, -1, -1):
        _paint(label, stamps[k], _top_left(tuple(centers_t[k]), stamps[k].shape), k + 1)
    return label


def _render_key_map(spec: SynthSpec, stamps, textures, centers_t) -> np.ndarray:
    a = spec.key_scale
    h, w = spec.height, spec.width
    intensity = np.full((h, w), -a, dtype=np.float64)
    for k in range(spec.num_objects - 1, -1, -1):
        pattern = a * (1.0 + 0.5 * textures[k])
        _paint(intensity, stamps[k], _top_left(tuple(centers_t[k]), stamps[k].shape), pattern)
    km = np.empty((KEY_CHANNELS, h, w), dtype=np.float64)
    km[0] = ((np.arange(w) + 0.5) / w)[None, :]
    km[1] = ((np.arange(h) + 0.5) / h)[:, None]
    km[2] = intensity
    km[3] = _blur(intensity, 1.2)
    km[4] = _blur(intensity, 3.0)
    km[5] = 1.0
    return km


def _band_mask(gt: np.ndarray, axis: int, slot: int, n_slots: int, frac: float,
               rng: np.random.Generator) -> np.ndarray:
    """Keep a contiguous row- or column-band of the mask holding ~frac of its area."""
    if axis == 1:
        return _band_mask(gt.T, 0, slot, n_slots, frac, rng).T
    area = int(gt.sum())
    rows = gt.sum(axis=1)
    nz = np.nonzero(rows)[0]
    r0, r1 = int(nz[0]), int(nz[-1]) + 1
    cum = np.concatenate([[0], np.cumsum(rows[r0:r1])])
    span = r1 - r0
    start_f = (slot + rng.uniform(-0.3, 0.6)) / n_slots
    s = r0 + int(np.clip(round(start_f * span), 0, span - 1))
    target = frac * area
    while s > r0 and cum[-1] - cum[s - r0] < target:
        s -= 1
    e = s
    while e < r1 and cum[e - r0] - cum[s - r0] < target:
        e += 1
    out = np.zeros_like(gt)
    out[s:e] = gt[s:e]
    return out


def _deterministic_bands(gt: np.ndarray, n: int) -> list[np.ndarray]:
    """Fallback partition: n overlapping row bands at area quantiles, full union."""
    area = int(gt.sum())
    rows = gt.sum(axis=1)
    nz = np.nonzero(rows)[0]
    r0, r1 = int(nz[0]), int(nz[-1]) + 1
    cum = np.cumsum(rows[r0:r1]) / area
    parts = []
    for i in range(n):
        lo_q = max(0.0, i / n - 0.12)
        hi_q = min(1.0, (i + 1) / n + 0.12)
        s = r0 + int(np.searchsorted(cum, lo_q, side="left"))
        e = r0 + int(np.searchsorted(cum, hi_q, side="right")) + 1
        part = np.zeros_like(gt)
        part[s:min(e, r1)] = gt[s:min(e, r1)]
        if not part.any():
            part = gt.copy()
        parts.append(part)
    return parts


def _partial_set(gt: np.ndarray, rng: np.random.Generator, spec: SynthSpec) -> list[np.ndarray]:
    """Draw a proposal set whose union coverage lands inside the configured window."""
    n = spec.proposals_per_object
    lo, hi = spec.coverage
    if lo >= 1.0:
        return [gt.copy() for _ in range(n)]
    area = int(gt.sum())
    best = None
    best_over = math.inf
    for _ in range(40):
        parts = []
        for i in range(n):
            axis = int(rng.integers(0, 2))
            frac = rng.uniform(lo, hi)
            parts.append(_band_mask(gt, axis, i, n, frac, rng))
        union = np.zeros_like(gt)
        for p in parts:
            union |= p
        u = union.sum() / area
        # The union floor is a hard guarantee of the emitted corpus; the cap
        # is only a target, so overshoot is tolerated when draws run out.
        if u < spec.min_union or any(p.sum() / area > hi + 0.07 for p in parts):
            continue
        if u <= spec.max_union:
            return parts
        if u - spec.max_union < best_over:
            best_over, best = u - spec.max_union, parts
    if best is not None:
        return best
    return _deterministic_bands(gt, n)


def _normalize(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def _shift_mask(mask: np.ndarray, dy: int, dx: int) -> np.ndarray:
    out = np.zeros_like(mask)
    h, w = mask.shape
    ys0, yd0 = max(0, -dy), max(0, dy)
    xs0, xd0 = max(0, -dx), max(0, dx)
    hh = h - abs(dy)
    ww = w - abs(dx)
    if hh > 0 and ww > 0:
        out[yd0:yd0 + hh, xd0:xd0 + ww] = mask[ys0:ys0 + hh, xs0:xs0 + ww]
    return out


def _spurious_blob(rng: np.random.Generator, spec: SynthSpec,
                   center: tuple[float, float], obj_size: int) -> np.ndarray:
    s = max(8, int(obj_size * rng.uniform(0.3, 0.5)))
    yy = (np.arange(s) - (s - 1) / 2.0) / (s / 2.0)
    blob = (yy[:, None] ** 2 + yy[None, :] ** 2) <= 1.0
    ox = center[0] + rng.uniform(-1.3, 1.3) * obj_size
    oy = center[1] + rng.uniform(-1.3, 1.3) * obj_size
    ox = float(np.clip(ox, s / 2 + 1, spec.width - s / 2 - 1))
    oy = float(np.clip(oy, s / 2 + 1, spec.height - s / 2 - 1))
    canvas = np.zeros((spec.height, spec.width), dtype=bool)
    _paint(canvas, blob, _top_left((ox, oy), blob.shape), True)
    return canvas


def generate(spec: SynthSpec, out_dir) -> Path:
    """Emit a full sequence under out_dir and return the manifest path."""
    spec.validate()
    out = Path(out_dir)
    for sub in ("ann", "gt", "warp", "keys", "props"):
        (out / sub).mkdir(parents=True, exist_ok=True)

    shape_rng = _rng(spec.seed, _S_SHAPE)
    stamps = [_make_stamp(shape_rng, spec.object_size) for _ in range(spec.num_objects)]
    textures = [_make_texture(shape_rng, s.shape) for s in stamps]
    signatures = [_normalize(_rng(spec.seed, _S_FEAT, k).normal(size=spec.feature_dim))
                  for k in range(spec.num_objects)]
    centers = _paths(spec, stamps)

    labels = [_render_labels(spec, stamps, centers[:, t]) for t in range(spec.frames)]
    gts = [{k + 1: labels[t] == k + 1 for k in range(spec.num_objects)}
           for t in range(spec.frames)]

    frames_json = []
    for t in range(spec.frames):
        key_map = _render_key_map(spec, stamps, textures, centers[:, t])
        key_rel = f"keys/f{t:04d}.stgt"
        write_tensor(out / key_rel, key_map.astype(np.float32))
        record: dict = {"index": t, "key_map": key_rel}

        gt_rel = {}
        for k in range(1, spec.num_objects + 1):
            rel = f"gt/f{t:04d}_obj{k}.pgm"
            write_mask(out / rel, gts[t][k])
            gt_rel[str(k)] = rel
        record["gt"] = gt_rel

        if t == 0:
            ann_rel = {}
            for k in range(1, spec.num_objects + 1):
                rel = f"ann/obj{k}.pgm"
                write_mask(out / rel, gts[0][k])
                ann_rel[str(k)] = rel
            record["annotations"] = ann_rel
            frames_json.append(record)
            continue

        warped_rel = {}
        for k in range(1, spec.num_objects + 1):
            warp_rng = _rng(spec.seed, _S_WARP, t, k)
            tl_prev = _top_left(tuple(centers[k - 1, t - 1]), stamps[k - 1].shape)
            tl_now = _top_left(tuple(centers[k - 1, t]), stamps[k - 1].shape)
            q = _shift_mask(gts[t - 1][k], tl_now[0] - tl_prev[0], tl_now[1] - tl_prev[1])
            if spec.warp_radius > 0 and warp_rng.random() < spec.warp_rate:
                if warp_rng.random() < 0.5:
                    q = chebyshev_dilate(q, spec.warp_radius)
                else:
                    q = chebyshev_erode(q, spec.warp_radius)
            rel = f"warp/f{t:04d}_obj{k}.pgm"
            write_mask(out / rel, q)
            warped_rel[str(k)] = rel
        record["warped"] = warped_rel

        proposals = []
        for k in range(1, spec.num_objects + 1):
            prop_rng = _rng(spec.seed, _S_PROPS, t, k)
            gt_k = gts[t][k]
            if gt_k.any():
                for part in _partial_set(gt_k, prop_rng, spec):
                    box = bbox_of_mask(part)
                    if spec.bbox_jitter > 0:
                        for _ in range(8):
                            j = prop_rng.normal(0, spec.bbox_jitter, size=4)
                            cand = (box.x_min + j[0], box.y_min + j[1],
                                    box.x_max + j[2], box.y_max + j[3])
                            if cand[0] < cand[2] and cand[1] < cand[3]:
                                y0, y1, x0, x1 = raster_box(cand, gt_k.shape)
                                if y1 > y0 and x1 > x0 and part[y0:y1, x0:x1].any():
                                    box = type(box)(*cand)
                                    break
                    y0, y1, x0, x1 = raster_box(box, gt_k.shape)
                    crop = part[y0:y1, x0:x1]
                    idx = len(proposals)
                    mask_rel = f"props/f{t:04d}_p{idx:02d}.pgm"
                    feat_rel = f"props/f{t:04d}_p{idx:02d}.stgt"
                    write_mask(out / mask_rel, crop)
                    feat = _normalize(signatures[k - 1]
                                      + spec.feature_noise * prop_rng.normal(size=spec.feature_dim))
                    write_tensor(out / feat_rel, feat.astype(np.float32))
                    proposals.append({
                        "bbox": [float(v) for v in (box.x_min, box.y_min, box.x_max, box.y_max)],
                        "mask": mask_rel,
                        "feature": feat_rel,
                        "confidence": round(float(prop_rng.uniform(0.5, 1.0)), 4),
                    })
            spur_rng = _rng(spec.seed, _S_SPUR, t, k)
            if spec.spurious_rate > 0 and spur_rng.random() < spec.spurious_rate:
                blob = _spurious_blob(spur_rng, spec, tuple(centers[k - 1, t]),
                                      max(stamps[k - 1].shape))
                if blob.any():
                    box = bbox_of_mask(blob)
                    y0, y1, x0, x1 = raster_box(box, blob.shape)
                    idx = len(proposals)
                    mask_rel = f"props/f{t:04d}_p{idx:02d}.pgm"
                    feat_rel = f"props/f{t:04d}_p{idx:02d}.stgt"
                    write_mask(out / mask_rel, blob[y0:y1, x0:x1])
                    write_tensor(out / feat_rel,
                                 _normalize(spur_rng.normal(size=spec.feature_dim)).astype(np.float32))
                    proposals.append({
                        "bbox": [float(v) for v in (box.x_min, box.y_min, box.x_max, box.y_max)],
                        "mask": mask_rel,
                        "feature": feat_rel,
                        "confidence": round(float(spur_rng.uniform(0.2, 0.7)), 4),
                    })
        record["proposals"] = proposals
        frames_json.append(record)

    manifest = {
        "video": f"synth-{spec.motion}-{spec.seed}",
        "height": spec.height,
        "width": spec.width,
        "frames": frames_json,
    }
    man_path = out / "manifest.json"
    man_path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return man_path


def greedy_baseline(manifest_path, config: EngineConfig) -> list[FrameResult]:
    """Reference runner with every fusion stage disabled: raw proposals scored
    against the previous box and the warped mask, best one wins."""
    from .manifest import iter_frames, read_manifest
    cfg = replace(config, use_motion=False, use_spatial=False, use_temporal=False)
    man = read_manifest(manifest_path)
    return run_video(iter_frames(man), cfg)
