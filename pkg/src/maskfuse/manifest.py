"""Video manifest: the JSON index tying together mask, feature and key-map
files, plus the writers/readers for run outputs.

Schema (paths are relative to the manifest's directory):

    {
      "video": "name", "height": H, "width": W,
      "frames": [
        {"index": 0,
         "key_map": "keys/f0000.stgt",
         "annotations": {"1": "ann/obj1.pgm", ...},
         "gt": {"1": "gt/f0000_obj1.pgm", ...}},          # optional everywhere
        {"index": 1,
         "key_map": "keys/f0001.stgt",
         "proposals": [{"bbox": [x0, y0, x1, y1],
                        "mask": "props/f0001_p00.pgm",
                        "feature": "props/f0001_p00.stgt",
                        "confidence": 0.93}, ...],
         "warped": {"1": "warp/f0001_obj1.pgm", ...},
         "gt": {...}},
        ...
      ]
    }

Frame 0 must carry annotations; frames >= 1 must carry warped masks for every
annotated object. Proposal masks are crops sized exactly to their box raster.
"""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path
from typing import Iterator, Optional

import numpy as np

from .formats import FormatError, read_mask, read_tensor, write_label_map, write_mask
from .geometry import BBox, raster_box
from .pipeline import EngineConfig, FrameData, FrameResult, Proposal


class ManifestError(Exception):
    pass


class Manifest:
    def __init__(self, path: Path, data: dict):
        self.path = Path(path)
        self.root = self.path.parent
        self.video: str = data["video"]
        self.height: int = data["height"]
        self.width: int = data["width"]
        self.frames: list[dict] = data["frames"]
        self.object_ids: list[int] = sorted(int(k) for k in self.frames[0]["annotations"])

    def __len__(self) -> int:
        return len(self.frames)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ManifestError(msg)


def _check_file(root: Path, rel, ctx: str) -> Path:
    _require(isinstance(rel, str) and rel != "", f"{ctx}: path must be a non-empty string")
    p = root / rel
    _require(p.is_file(), f"{ctx}: file not found: {rel}")
    return p


def read_manifest(path) -> Manifest:
    """Parse and structurally validate a manifest. Per-file dimension checks
    happen lazily in load_frame, with the same frame/object context."""
    path = Path(path)
    if not path.is_file():
        raise ManifestError(f"manifest not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ManifestError(f"{path}: not valid JSON: {e}") from None
    _require(isinstance(data, dict), f"{path}: manifest root must be an object")
    for field_name in ("video", "height", "width", "frames"):
        _require(field_name in data, f"{path}: missing required field {field_name!r}")
    _require(isinstance(data["height"], int) and data["height"] > 0, f"{path}: height must be a positive integer")
    _require(isinstance(data["width"], int) and data["width"] > 0, f"{path}: width must be a positive integer")
    frames = data["frames"]
    _require(isinstance(frames, list) and len(frames) >= 1, f"{path}: frames must be a non-empty list")
    root = path.parent
    for pos, fr in enumerate(frames):
        ctx = f"frame {pos}"
        _require(isinstance(fr, dict), f"{ctx}: frame record must be an object")
        _require(fr.get("index") == pos, f"{ctx}: frame indices must be contiguous from 0, got {fr.get('index')!r}")
        _require("key_map" in fr, f"{ctx}: missing key_map")
        _check_file(root, fr["key_map"], f"{ctx}: key_map")
        if pos == 0:
            ann = fr.get("annotations")
            _require(isinstance(ann, dict) and len(ann) > 0, "frame 0: must carry at least one annotation")
            for k, rel in ann.items():
                _require(str(k).isdigit() and 1 <= int(k) <= 255, f"frame 0: bad object id {k!r}")
                _check_file(root, rel, f"frame 0: annotation for object {k}")
        ids = sorted(int(k) for k in frames[0]["annotations"]) if pos > 0 else []
        if pos > 0:
            warped = fr.get("warped")
            _require(isinstance(warped, dict), f"{ctx}: missing warped masks")
            for k in ids:
                _require(str(k) in warped, f"{ctx}: missing warped mask for object {k}")
                _check_file(root, warped[str(k)], f"{ctx}: warped mask for object {k}")
            for j, pr in enumerate(fr.get("proposals", [])):
                pctx = f"{ctx}: proposal {j}"
                _require(isinstance(pr, dict), f"{pctx}: record must be an object")
                bbox = pr.get("bbox")
                _require(isinstance(bbox, list) and len(bbox) == 4
                         and all(isinstance(v, (int, float)) for v in bbox),
                         f"{pctx}: bbox must be [x_min, y_min, x_max, y_max]")
                _require(bbox[0] < bbox[2] and bbox[1] < bbox[3],
                         f"{pctx}: degenerate bbox {bbox}")
                _check_file(root, pr.get("mask"), f"{pctx}: mask")
                _check_file(root, pr.get("feature"), f"{pctx}: feature")
        if "gt" in fr:
            for k, rel in fr["gt"].items():
                _check_file(root, rel, f"{ctx}: gt for object {k}")
    return Manifest(path, data)


def _load_full_mask(root: Path, rel: str, hw: tuple[int, int], ctx: str) -> np.ndarray:
    try:
        m = read_mask(root / rel)
    except FormatError as e:
        raise ManifestError(f"{ctx}: {e}") from None
    if m.shape != hw:
        raise ManifestError(f"{ctx}: mask is {m.shape[1]}x{m.shape[0]}, video is {hw[1]}x{hw[0]}")
    return m


def load_frame(man: Manifest, pos: int) -> FrameData:
    """Read every file a frame references, validating dimensions."""
    fr = man.frames[pos]
    hw = (man.height, man.width)
    ctx = f"frame {pos}"
    try:
        key_map = read_tensor(man.root / fr["key_map"]).astype(np.float64)
    except FormatError as e:
        raise ManifestError(f"{ctx}: key_map: {e}") from None
    if key_map.ndim != 3 or key_map.shape[1:] != hw:
        raise ManifestError(
            f"{ctx}: key_map must be (C, {man.height}, {man.width}), got {key_map.shape}")
    annotations = None
    if pos == 0:
        annotations = {int(k): _load_full_mask(man.root, rel, hw, f"frame 0: annotation for object {k}")
                       for k, rel in fr["annotations"].items()}
    proposals = []
    for j, pr in enumerate(fr.get("proposals", [])):
        pctx = f"{ctx}: proposal {j}"
        box = BBox(*[float(v) for v in pr["bbox"]])
        y0, y1, x0, x1 = raster_box(box, hw)
        if y1 <= y0 or x1 <= x0:
            raise ManifestError(f"{pctx}: bbox {list(box)} lies outside the frame")
        try:
            crop = read_mask(man.root / pr["mask"])
        except FormatError as e:
            raise ManifestError(f"{pctx}: mask: {e}") from None
        if crop.shape != (y1 - y0, x1 - x0):
            raise ManifestError(
                f"{pctx}: mask is {crop.shape[1]}x{crop.shape[0]} but the bbox raster "
                f"is {x1 - x0}x{y1 - y0}")
        try:
            feat = read_tensor(man.root / pr["feature"]).astype(np.float64)
        except FormatError as e:
            raise ManifestError(f"{pctx}: feature: {e}") from None
        if feat.ndim != 1:
            raise ManifestError(f"{pctx}: feature must be rank 1, got shape {feat.shape}")
        proposals.append(Proposal(bbox=box, mask=crop, feature=feat,
                                  confidence=float(pr.get("confidence", 1.0))))
    warped = {}
    if pos > 0:
        warped = {k: _load_full_mask(man.root, fr["warped"][str(k)], hw,
                                     f"{ctx}: warped mask for object {k}")
                  for k in man.object_ids}
    gt = None
    if "gt" in fr:
        gt = {int(k): _load_full_mask(man.root, rel, hw, f"{ctx}: gt for object {k}")
              for k, rel in fr["gt"].items()}
    return FrameData(index=pos, key_map=key_map, annotations=annotations,
                     proposals=proposals, warped=warped, gt=gt)


def iter_frames(man: Manifest) -> Iterator[FrameData]:
    for pos in range(len(man)):
        yield load_frame(man, pos)


def load_gt(man: Manifest) -> list[dict[int, np.ndarray]]:
    """Ground-truth masks for every frame; errors if any frame lacks them."""
    hw = (man.height, man.width)
    out = []
    for pos, fr in enumerate(man.frames):
        if "gt" not in fr:
            raise ManifestError(f"frame {pos}: manifest carries no ground truth")
        out.append({int(k): _load_full_mask(man.root, rel, hw, f"frame {pos}: gt for object {k}")
                    for k, rel in fr["gt"].items()})
    return out


# ---------------------------------------------------------------------------
# Run outputs

def mask_filename(index: int, oid: int) -> str:
    return f"masks/f{index:04d}_obj{oid}.pgm"


def label_filename(index: int) -> str:
    return f"labels/f{index:04d}.pgm"


def config_dict(config: EngineConfig) -> dict:
    d = asdict(config)
    d["key_size"] = list(d["key_size"])
    return d


def write_results(out_dir, man: Manifest, results: list[FrameResult],
                  config: EngineConfig, backend: str) -> Path:
    """Write per-object masks, per-frame label maps and the JSON report."""
    out = Path(out_dir)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    (out / "labels").mkdir(parents=True, exist_ok=True)
    frames_report = []
    fallback_total = 0
    for res in results:
        for oid, mask in sorted(res.masks.items()):
            write_mask(out / mask_filename(res.index, oid), mask)
        write_label_map(out / label_filename(res.index), res.label_map)
        objs = {}
        for oid in sorted(res.masks.keys()):
            entry: dict = {"fallback": bool(res.fallback.get(oid, False))}
            fallback_total += int(entry["fallback"])
            if res.selected.get(oid) is not None:
                entry["selected"] = res.selected[oid]
            if res.scores.get(oid):
                entry["scores"] = [[s.box_term, s.prop_term, s.total] for s in res.scores[oid]]
            if res.retrieval_mean.get(oid):
                entry["retrieval_mean"] = res.retrieval_mean[oid]
            if res.loss and oid in res.loss:
                d, b, tot = res.loss[oid]
                entry["loss"] = [d, b, tot]
            objs[str(oid)] = entry
        frames_report.append({"index": res.index, "elapsed_ms": res.elapsed * 1000.0,
                              "objects": objs})
    report = {
        "video": man.video,
        "height": man.height,
        "width": man.width,
        "backend": backend,
        "config": config_dict(config),
        "fallback_total": fallback_total,
        "frames": frames_report,
    }
    report_path = out / "report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    return report_path


def read_result_masks(pred_dir, man: Manifest) -> list[dict[int, np.ndarray]]:
    """Read back the masks a run wrote, shaped like load_gt's output."""
    pred = Path(pred_dir)
    hw = (man.height, man.width)
    out = []
    for pos in range(len(man)):
        frame_masks = {}
        for oid in man.object_ids:
            p = pred / mask_filename(pos, oid)
            if not p.is_file():
                raise ManifestError(f"frame {pos}: missing predicted mask for object {oid}: {p}")
            m = read_mask(p)
            if m.shape != hw:
                raise ManifestError(
                    f"frame {pos}: predicted mask for object {oid} is {m.shape}, expected {hw}")
            frame_masks[oid] = m
        out.append(frame_masks)
    return out
