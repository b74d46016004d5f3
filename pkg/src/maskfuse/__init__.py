"""maskfuse: deterministic fusion of detector mask proposals into per-object
video segmentations, driven by a motion model, a proposal affinity graph and
an attention-based temporal memory."""

from .geometry import BBox, bbox_of_mask, binarize, crop_resize, expand_box, iou_box, iou_mask, paste_into_void
from .metrics import evaluate_sequence, f_measure, j_measure
from .pipeline import Engine, EngineConfig, FrameData, FrameResult, Proposal, run_video
from .synth import SynthSpec, generate, greedy_baseline

__version__ = "0.1.0"

__all__ = [
    "BBox", "bbox_of_mask", "binarize", "crop_resize", "expand_box",
    "iou_box", "iou_mask", "paste_into_void",
    "evaluate_sequence", "f_measure", "j_measure",
    "Engine", "EngineConfig", "FrameData", "FrameResult", "Proposal", "run_video",
    "SynthSpec", "generate", "greedy_baseline",
    "__version__",
]
