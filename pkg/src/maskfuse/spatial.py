"""Proposal graph: pairwise affinity weights and consensus state updates.

Every proposal assigned to an object becomes a node carrying a full-frame
soft mask. Nodes exchange evidence along edges weighted by feature cosine
similarity and box overlap; a few synchronous normalized-average rounds pull
mutually consistent proposals toward a shared consensus while isolated or
dissimilar nodes stay put.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import BBox, binarize, iou_box

__all__ = [
    "ProposalNode",
    "edge_weights",
    "aggregate",
    "update_node",
    "run_spatial",
    "binarize",
]


@dataclass
class ProposalNode:
    bbox: BBox
    mask: np.ndarray      # (H, W) float64 soft state, proposal pasted into a zero frame
    feature: np.ndarray   # (C,) float64 appearance descriptor


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("zero-norm feature vector")
    return float(np.dot(a, b) / (na * nb))


def edge_weights(nodes: list[ProposalNode], alpha: float, beta: float) -> np.ndarray:
    """Pairwise weights alpha * cos(features) + beta * iou(boxes), clamped to
    [0, 1], with a zero diagonal so no node reinforces itself."""
    n = len(nodes)
    w = np.zeros((n, n), dtype=np.float64)
    for v in range(n):
        for u in range(v + 1, n):
            val = alpha * cosine(nodes[v].feature, nodes[u].feature)
            val += beta * iou_box(nodes[v].bbox, nodes[u].bbox)
            w[v, u] = w[u, v] = min(1.0, max(0.0, val))
    return w


def aggregate(states: np.ndarray, weights: np.ndarray, v: int) -> np.ndarray:
    """Weighted sum of the other nodes' states flowing into node v."""
    n = states.shape[0]
    m = np.zeros_like(states[0])
    for u in range(n):
        if u != v:
            m += weights[v, u] * states[u]
    return m


def update_node(h: np.ndarray, m: np.ndarray, weights: np.ndarray, v: int) -> np.ndarray:
    """One normalized update of node v given its aggregated message m."""
    others = float(weights[v].sum() - weights[v, v])
    return ((1.0 - weights[v, v]) * h + m) / (1.0 + others)


def run_spatial(nodes: list[ProposalNode], alpha: float, beta: float, iters: int) -> np.ndarray:
    """Build the weight matrix once, then run iters synchronous update rounds.

    Returns the final soft states as an (N, H, W) array indexed like nodes.
    """
    if not nodes:
        raise ValueError("spatial graph needs at least one node")
    if iters < 1:
        raise ValueError(f"iteration count must be >= 1, got {iters}")
    w = edge_weights(nodes, alpha, beta)
    shape = nodes[0].mask.shape
    states = np.stack([np.asarray(n.mask, dtype=np.float64) for n in nodes]).reshape(len(nodes), -1)
    out = kernels.spatial_propagate(states, w, iters)
    return out.reshape(len(nodes), *shape)
