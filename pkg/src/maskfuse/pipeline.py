"""The per-frame fusion engine.

Frame 0 seeds the state from the given annotations. Every later frame runs,
per object: box prediction, proposal assignment, the proposal graph, score
based selection, and memory refinement, with a warped-previous-mask fallback
whenever a stage comes up empty. Outputs are made disjoint at the end of the
frame and only then fed back into the motion and memory state, so the whole
engine is causal and deterministic.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import BBox, bbox_of_mask, binarize, paste_into_void
from .motion import PredictedBox, TrackState, assign_proposals, last_box, predict, update_track
from .selection import SelectionScore, score, score_candidates
from .spatial import ProposalNode, run_spatial
from .temporal import MemoryBank, make_entry, retrieve_refine


class PipelineError(Exception):
    pass


@dataclass(frozen=True)
class EngineConfig:
    """Every knob of the engine; defaults are the tuned operating point."""
    alpha: float = 0.7            # feature-similarity weight in graph edges
    beta: float = 0.3             # box-overlap weight in graph edges
    lambda1: float = 0.4          # predicted-box term weight in selection
    lambda2: float = 0.6          # warped-mask term weight in selection
    iters: int = 2                # graph update rounds (1..3)
    thr: float = 0.2              # binarization threshold, strict >
    history_n: int = 10           # motion history window
    margin: float = 0.15          # crop expansion ratio for memory crops
    key_size: tuple[int, int] = (32, 32)
    tau_assign: float = 0.0       # min IoU for proposal assignment, strict >
    gamma: float = 100.0          # weight of the selection-consistency loss term
    seed: int = 0                 # echoed into reports; the engine itself is deterministic
    max_memory: Optional[int] = None
    use_motion: bool = True
    use_spatial: bool = True
    use_temporal: bool = True
    threads: int = 1

    def validate(self) -> None:
        if self.iters not in (1, 2, 3):
            raise ValueError(f"iters must be 1, 2 or 3, got {self.iters}")
        if not (0.0 <= self.thr < 1.0):
            raise ValueError(f"thr must be in [0, 1), got {self.thr}")
        if not (0.0 <= self.tau_assign < 1.0):
            raise ValueError(f"tau_assign must be in [0, 1), got {self.tau_assign}")
        for name in ("alpha", "beta", "lambda1", "lambda2", "margin", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.history_n < 1:
            raise ValueError("history_n must be >= 1")
        kh, kw = self.key_size
        if kh < 2 or kw < 2:
            raise ValueError(f"key_size too small: {self.key_size}")
        if self.max_memory is not None and self.max_memory < 1:
            raise ValueError("max_memory must be >= 1 when set")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass
class Proposal:
    bbox: BBox
    mask: np.ndarray       # (bh, bw) bool crop, sized to the box raster
    feature: np.ndarray    # (C,) float64
    confidence: float = 1.0  # carried through for reporting, not used in fusion


@dataclass
class FrameData:
    index: int
    key_map: np.ndarray                                  # (C, H, W) float64
    annotations: Optional[dict[int, np.ndarray]] = None  # frame 0 only
    proposals: list[Proposal] = field(default_factory=list)
    warped: dict[int, np.ndarray] = field(default_factory=dict)
    gt: Optional[dict[int, np.ndarray]] = None


@dataclass
class FrameResult:
    index: int
    masks: dict[int, np.ndarray]          # per-object binary, pairwise disjoint
    label_map: np.ndarray                 # (H, W) int32, 0 = background
    fallback: dict[int, bool]
    selected: dict[int, Optional[int]]    # winning candidate index, None on fallback
    scores: dict[int, list[SelectionScore]]
    pre_temporal: dict[int, np.ndarray]   # chosen mask before memory refinement
    retrieval_mean: dict[int, float]      # mean memory read magnitude (diagnostic)
    loss: Optional[dict[int, tuple[float, float, float]]]
    elapsed: float


@dataclass
class _ObjectOutcome:
    final: np.ndarray
    soft: np.ndarray
    fallback: bool
    selected: Optional[int]
    scores: list[SelectionScore]
    chosen: np.ndarray
    retrieval_mean: float
    loss: Optional[tuple[float, float, float]]


def resolve_overlaps(masks: dict[int, np.ndarray], softs: dict[int, np.ndarray]
                     ) -> tuple[np.ndarray, dict[int, np.ndarray]]:
    """Make per-object masks pairwise disjoint.

    A pixel claimed by several objects goes to the claimant with the highest
    soft value there; exact ties go to the lowest object id. Unclaimed pixels
    stay background (label 0).
    """
    ids = sorted(masks.keys())
    claim = np.stack([np.asarray(masks[k], dtype=bool) for k in ids])
    soft = np.stack([np.asarray(softs[k], dtype=np.float64) for k in ids])
    masked = np.where(claim, soft, -1.0)
    winner = np.argmax(masked, axis=0)  # first maximum, so lowest id wins ties
    any_claim = claim.any(axis=0)
    id_arr = np.asarray(ids, dtype=np.int32)
    label = np.where(any_claim, id_arr[winner], np.int32(0))
    resolved = {k: claim[i] & (label == k) for i, k in enumerate(ids)}
    return label, resolved


def diagnostic_loss(candidates: list[np.ndarray], final_soft: np.ndarray,
                    gt: np.ndarray, pred_box, prior: np.ndarray,
                    config: EngineConfig) -> tuple[float, float, float]:
    """Evaluation-only consistency loss against ground truth.

    First term: gamma-weighted sum over candidates of the absolute gap
    between the selection score conditioned on ground truth (its box and
    mask) and the one conditioned on the engine's own anchors. Second term:
    pixel-mean binary cross-entropy of the sigmoid-squashed soft output
    against the ground-truth mask.
    """
    gt = np.asarray(gt, dtype=bool)
    gt_box = bbox_of_mask(gt)
    dist = 0.0
    for cand in candidates:
        s_true = score(cand, gt_box, gt, config.lambda1, config.lambda2)
        s_used = score(cand, pred_box, prior, config.lambda1, config.lambda2)
        dist += abs(s_true.total - s_used.total)
    dist *= config.gamma
    sig = 1.0 / (1.0 + np.exp(-np.asarray(final_soft, dtype=np.float64)))
    gtf = gt.astype(np.float64)
    bce = float(np.mean(-gtf * np.log(sig) - (1.0 - gtf) * np.log1p(-sig)))
    return dist, bce, dist + bce


class Engine:
    """Stateful frame-by-frame runner. Feed frames in order via step()."""

    def __init__(self, config: EngineConfig):
        config.validate()
        self.cfg = config
        self.tracks: dict[int, TrackState] = {}
        self.banks: dict[int, MemoryBank] = {}
        self.object_ids: list[int] = []
        self.shape: Optional[tuple[int, int]] = None
        self.next_index = 0

    # -- frame 0 -----------------------------------------------------------
    def _init_frame0(self, frame: FrameData) -> FrameResult:
        t0 = time.perf_counter()
        if not frame.annotations:
            raise PipelineError("frame 0 must carry at least one annotation")
        ids = sorted(frame.annotations.keys())
        shape = None
        total = None
        for k in ids:
            m = np.asarray(frame.annotations[k], dtype=bool)
            if shape is None:
                shape = m.shape
                total = np.zeros(shape, dtype=np.int32)
            elif m.shape != shape:
                raise PipelineError(f"annotation for object {k} has shape {m.shape}, expected {shape}")
            if not m.any():
                raise PipelineError(f"annotation for object {k} is empty")
            total += m
        if int(total.max()) > 1:
            raise PipelineError("frame 0 annotations overlap")
        if frame.key_map.shape[-2:] != shape:
            raise PipelineError(
                f"frame 0 key map spatial shape {frame.key_map.shape[-2:]} does not match masks {shape}")
        self.shape = shape
        self.object_ids = ids
        masks = {}
        for k in ids:
            m = np.asarray(frame.annotations[k], dtype=bool)
            masks[k] = m.copy()
            track = TrackState(object_id=k, history_n=self.cfg.history_n)
            update_track(track, bbox_of_mask(m))
            self.tracks[k] = track
            self.banks[k] = MemoryBank(
                make_entry(m, frame.key_map, self.cfg.margin, self.cfg.key_size, 0))
        label, resolved = resolve_overlaps(masks, {k: masks[k].astype(np.float64) for k in ids})
        return FrameResult(
            index=0, masks=resolved, label_map=label,
            fallback={k: False for k in ids}, selected={k: None for k in ids},
            scores={k: [] for k in ids}, pre_temporal={k: masks[k] for k in ids},
            retrieval_mean={k: 0.0 for k in ids}, loss=None,
            elapsed=time.perf_counter() - t0)

    # -- frames >= 1 -------------------------------------------------------
    def _object_pass(self, oid: int, frame: FrameData, pred: PredictedBox,
                     idxs: list[int]) -> _ObjectOutcome:
        cfg = self.cfg
        q_raw = frame.warped.get(oid)
        q = (np.asarray(q_raw, dtype=bool) if q_raw is not None
             else np.zeros(self.shape, dtype=bool))

        def fallback(scores: list[SelectionScore]) -> _ObjectOutcome:
            out = _ObjectOutcome(
                final=q.copy(), soft=q.astype(np.float64), fallback=True,
                selected=None, scores=scores, chosen=q.copy(), retrieval_mean=0.0, loss=None)
            self._attach_loss(out, frame, oid, [], pred, q)
            return out

        if not idxs:
            return fallback([])
        nodes = []
        for i in idxs:
            p = frame.proposals[i]
            full = paste_into_void(p.mask.astype(np.float64), p.bbox, self.shape, "nearest")
            nodes.append(ProposalNode(bbox=p.bbox, mask=full, feature=p.feature))
        if cfg.use_spatial:
            states = run_spatial(nodes, cfg.alpha, cfg.beta, cfg.iters)
        else:
            states = np.stack([n.mask for n in nodes])
        candidates = [binarize(states[v], cfg.thr) for v in range(len(nodes))]
        scores = score_candidates(candidates, pred, q, cfg.lambda1, cfg.lambda2)
        best = 0
        for i in range(1, len(scores)):
            if scores[i].total > scores[best].total:
                best = i
        chosen = candidates[best]
        if not chosen.any():
            out = fallback(scores)
            self._attach_loss(out, frame, oid, candidates, pred, q, replace=True)
            return out
        if cfg.use_temporal:
            final, soft, rmean = retrieve_refine(
                chosen, frame.key_map, self.banks[oid], cfg.thr, cfg.margin, cfg.key_size)
            if not final.any():
                out = fallback(scores)
                self._attach_loss(out, frame, oid, candidates, pred, q, replace=True)
                return out
        else:
            final, soft, rmean = chosen, states[best], 0.0
        out = _ObjectOutcome(final=final, soft=soft, fallback=False, selected=best,
                             scores=scores, chosen=chosen, retrieval_mean=rmean, loss=None)
        self._attach_loss(out, frame, oid, candidates, pred, q)
        return out

    def _attach_loss(self, out: _ObjectOutcome, frame: FrameData, oid: int,
                     candidates: list[np.ndarray], pred, q: np.ndarray,
                     replace: bool = False) -> None:
        if frame.gt is None or oid not in frame.gt:
            return
        if out.loss is not None and not replace:
            return
        out.loss = diagnostic_loss(candidates, out.soft, frame.gt[oid], pred, q, self.cfg)

    def _process_frame(self, frame: FrameData) -> FrameResult:
        t0 = time.perf_counter()
        cfg = self.cfg
        if frame.key_map.shape[-2:] != self.shape:
            raise PipelineError(
                f"frame {frame.index} key map spatial shape {frame.key_map.shape[-2:]} "
                f"does not match video {self.shape}")
        preds = {}
        for oid in self.object_ids:
            track = self.tracks[oid]
            preds[oid] = predict(track) if cfg.use_motion else last_box(track)
        assignment = assign_proposals([p.bbox for p in frame.proposals], preds, cfg.tau_assign)

        def work(oid: int) -> _ObjectOutcome:
            return self._object_pass(oid, frame, preds[oid], assignment.get(oid, []))

        if cfg.threads > 1 and len(self.object_ids) > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                outcomes = dict(zip(self.object_ids, pool.map(work, self.object_ids)))
        else:
            outcomes = {oid: work(oid) for oid in self.object_ids}

        label, resolved = resolve_overlaps(
            {k: o.final for k, o in outcomes.items()},
            {k: o.soft for k, o in outcomes.items()})
        # State updates only after the frame is fully resolved, in id order.
        for oid in self.object_ids:
            final = resolved[oid]
            if final.any():
                update_track(self.tracks[oid], bbox_of_mask(final))
                if cfg.use_temporal:
                    self.banks[oid].append(
                        make_entry(final, frame.key_map, cfg.margin, cfg.key_size, frame.index),
                        cap=cfg.max_memory)
        loss = None
        if frame.gt is not None:
            loss = {k: o.loss for k, o in outcomes.items() if o.loss is not None}
        return FrameResult(
            index=frame.index, masks=resolved, label_map=label,
            fallback={k: o.fallback for k, o in outcomes.items()},
            selected={k: o.selected for k, o in outcomes.items()},
            scores={k: o.scores for k, o in outcomes.items()},
            pre_temporal={k: o.chosen for k, o in outcomes.items()},
            retrieval_mean={k: o.retrieval_mean for k, o in outcomes.items()},
            loss=loss, elapsed=time.perf_counter() - t0)

    def step(self, frame: FrameData) -> FrameResult:
        if frame.index != self.next_index:
            raise PipelineError(f"expected frame {self.next_index}, got {frame.index}")
        result = self._init_frame0(frame) if frame.index == 0 else self._process_frame(frame)
        self.next_index += 1
        return result


def run_video(frames, config: EngineConfig) -> list[FrameResult]:
    """Run the engine over an iterable of FrameData, frame 0 first."""
    engine = Engine(config)
    return [engine.step(f) for f in frames]
