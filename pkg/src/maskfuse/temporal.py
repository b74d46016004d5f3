"""Temporal memory: key/value crops per past frame, attention retrieval, and
the running-average refinement of the current mask.

Each processed frame leaves one memory entry behind: the frame key map and
the object's mask, both cropped around the mask's slightly expanded box and
resampled to a fixed grid. At the next frame the current crop queries every
stored entry with per-entry softmax attention over memory pixels; the summed
reads are blended with the current crop by a 1 / (count + 1) average.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import kernels
from .geometry import bbox_of_mask, binarize, crop_resize, expand_box, paste_into_void


@dataclass
class MemoryEntry:
    frame_index: int
    key: np.ndarray    # (C, H1, W1) float64
    value: np.ndarray  # (H1, W1) float64 in [0, 1]


class MemoryBank:
    """Ordered per-object memory. The first entry (frame 0, the annotation)
    is never evicted; a capacity cap drops the oldest later entries."""

    def __init__(self, first: MemoryEntry):
        if first.frame_index != 0:
            raise ValueError("memory must start with the frame 0 entry")
        self.entries: list[MemoryEntry] = [first]

    def __len__(self) -> int:
        return len(self.entries)

    def append(self, entry: MemoryEntry, cap: Optional[int] = None) -> None:
        if entry.frame_index <= self.entries[-1].frame_index:
            raise ValueError(
                f"memory frame indices must increase: {entry.frame_index} after "
                f"{self.entries[-1].frame_index}")
        self.entries.append(entry)
        if cap is not None and len(self.entries) > cap:
            del self.entries[1]

    def stacked(self) -> tuple[np.ndarray, np.ndarray]:
        """Keys as (R, P, C) and values as (R, P) for the retrieval kernel."""
        keys = np.stack([e.key.reshape(e.key.shape[0], -1).T for e in self.entries])
        values = np.stack([e.value.reshape(-1) for e in self.entries])
        return np.ascontiguousarray(keys), np.ascontiguousarray(values)


def make_entry(mask: np.ndarray, key_map: np.ndarray, margin: float,
               target_hw: tuple[int, int], frame_index: int) -> MemoryEntry:
    """Build the key/value crop pair for a binary mask.

    The crop region is the mask's tight box expanded by the margin ratio;
    keys resample bilinearly, the mask value crop uses nearest so it stays
    binary-valued.
    """
    mask = np.asarray(mask, dtype=bool)
    box = bbox_of_mask(mask)
    if box is None:
        raise ValueError("cannot build a memory entry from an empty mask")
    region = expand_box(box, margin, mask.shape)
    key = crop_resize(key_map, region, target_hw, "bilinear")
    value = crop_resize(mask.astype(np.float64), region, target_hw, "nearest")
    return MemoryEntry(frame_index, key, value)


def retrieve(query_key: np.ndarray, bank: MemoryBank) -> np.ndarray:
    """Attention read of every memory entry by the query key grid.

    Returns an (H1, W1) grid whose pixel i holds the sum over entries of the
    softmax-weighted average of that entry's values, weighted by key dot
    products. Each entry contributes a convex combination of its values, so
    the output is bounded by len(bank) when values lie in [0, 1].
    """
    c, h1, w1 = query_key.shape
    q = np.ascontiguousarray(query_key.reshape(c, -1).T)
    keys, values = bank.stacked()
    if keys.shape[1] != q.shape[0] or keys.shape[2] != c:
        raise ValueError(f"query grid {query_key.shape} does not match memory {keys.shape}")
    out = kernels.attention_retrieve(q, keys, values)
    return out.reshape(h1, w1)


def refine(h: np.ndarray, m: np.ndarray, t: int) -> np.ndarray:
    """Blend the current crop with the summed memory reads: (h + m) / (t + 1).

    t is the number of memory frames that contributed to m; with values in
    [0, 1] the result stays in [0, 1]. Requires t >= 1.
    """
    if t < 1:
        raise ValueError(f"refinement needs at least one memory frame, got t={t}")
    return (np.asarray(h, dtype=np.float64) + np.asarray(m, dtype=np.float64)) / (t + 1.0)


def retrieve_refine(chosen: np.ndarray, key_map: np.ndarray, bank: MemoryBank,
                    thr: float, margin: float, target_hw: tuple[int, int]
                    ) -> tuple[np.ndarray, np.ndarray, float]:
    """Full refinement of a chosen binary mask against the memory bank.

    Crops the mask and the frame key map around the mask's expanded box,
    retrieves, refines with the count actually retrieved, thresholds the crop
    and pastes it back into a zero frame (nearest, so the output is binary).
    Also returns the refined soft values pasted back bilinearly (used as
    overlap evidence) and the mean retrieval magnitude (a diagnostic).
    """
    chosen = np.asarray(chosen, dtype=bool)
    box = bbox_of_mask(chosen)
    if box is None:
        raise ValueError("cannot refine an empty mask")
    region = expand_box(box, margin, chosen.shape)
    h_crop = crop_resize(chosen.astype(np.float64), region, target_hw, "nearest")
    k_crop = crop_resize(key_map, region, target_hw, "bilinear")
    m_crop = retrieve(k_crop, bank)
    refined = refine(h_crop, m_crop, len(bank))
    crop_bin = binarize(refined, thr)
    full = paste_into_void(crop_bin.astype(np.float64), region, chosen.shape, "nearest") >= 0.5
    soft = paste_into_void(refined, region, chosen.shape, "bilinear")
    return full, soft, float(m_crop.mean())


def temporal_step(chosen: np.ndarray, key_map: np.ndarray, bank: MemoryBank, t: int,
                  thr: float, margin: float, target_hw: tuple[int, int]
                  ) -> tuple[np.ndarray, Optional[MemoryEntry]]:
    """One standalone refinement step that also extends the bank.

    Returns the refined full-frame binary mask and the appended entry (built
    from the refined mask's own box). If thresholding empties the mask no
    entry can be built and the bank is left untouched.
    """
    if t < 1:
        raise ValueError(f"temporal refinement starts at frame 1, got t={t}")
    full, _, _ = retrieve_refine(chosen, key_map, bank, thr, margin, target_hw)
    if not full.any():
        return full, None
    entry = make_entry(full, key_map, margin, target_hw, t)
    bank.append(entry)
    return full, entry
