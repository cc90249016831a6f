"""Overlap, importance weighting, labeling, truncated norms, batch objective.

Each training sample is weighted by how informative its box is relative to
the current detection: boxes near-coincident with it or clearly off it get
high weight, ambiguous half-overlapping ones get little. Residuals whose l2
norm falls under a label-dependent threshold are zeroed (truncated), which
drops those samples from backpropagation entirely; the positive-class
threshold is tighter by a factor of (1 + u).
"""

from __future__ import annotations

import numpy as np

from .cnn import CnnModel, forward_full_batch
from .config import LossConfig
from .geometry import Box

_DEFAULT = LossConfig()

POSITIVE = 1
NEGATIVE = 0


def label_vectors(labels: np.ndarray) -> np.ndarray:
    """(N, 2) one-hot targets: positive -> [1, 0], negative -> [0, 1]."""
    lab = np.asarray(labels, dtype=np.float64)
    return np.stack([lab, 1.0 - lab], axis=-1)


def overlap(a, b) -> float:
    """Intersection-over-union of two x/y/w/h boxes, in [0, 1]."""
    ax, ay, aw, ah = (float(v) for v in a)
    bx, by, bw, bh = (float(v) for v in b)
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise ValueError("boxes must have positive area")
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def overlap_many(boxes: np.ndarray, ref) -> np.ndarray:
    """Vectorized overlap of (N, 4) boxes against one reference box."""
    boxes = np.asarray(boxes, dtype=np.float64)
    rx, ry, rw, rh = (float(v) for v in ref)
    iw = np.minimum(boxes[:, 0] + boxes[:, 2], rx + rw) - np.maximum(boxes[:, 0], rx)
    ih = np.minimum(boxes[:, 1] + boxes[:, 3], ry + rh) - np.maximum(boxes[:, 1], ry)
    inter = np.clip(iw, 0.0, None) * np.clip(ih, 0.0, None)
    union = boxes[:, 2] * boxes[:, 3] + rw * rh - inter
    return inter / union


def importance_delta(theta):
    """Training weight of a sample given its overlap with the detection.

    Zero at theta = 0.5 (ambiguous boxes), maximal at theta in {0, 1}.
    """
    t = np.asarray(theta, dtype=np.float64)
    out = np.abs(2.0 / (1.0 + np.exp(-(t - 0.5))) - 1.0)
    return float(out) if np.isscalar(theta) else out


def assign_label(theta: float, threshold: float = _DEFAULT.label_overlap_threshold) -> int:
    """1 (positive) iff overlap strictly exceeds the threshold, else 0."""
    return POSITIVE if theta > threshold else NEGATIVE


def truncation_thresholds(labels: np.ndarray, cfg: LossConfig = _DEFAULT) -> np.ndarray:
    lab = np.asarray(labels, dtype=np.float64)
    return cfg.beta / (1.0 + cfg.u * lab)


def truncated_norm(residual, label: int, cfg: LossConfig = _DEFAULT) -> float:
    """l2 norm of the residual, zeroed when it is at or below the threshold."""
    e2 = float(np.linalg.norm(np.asarray(residual, dtype=np.float64)))
    tau = cfg.beta / (1.0 + cfg.u * label)
    return 0.0 if e2 <= tau else e2


def truncated_norms(residuals: np.ndarray, labels: np.ndarray,
                    cfg: LossConfig = _DEFAULT) -> np.ndarray:
    """Vectorized truncated_norm over (N, 2) residuals."""
    e2 = np.linalg.norm(np.asarray(residuals, dtype=np.float64), axis=-1)
    return np.where(e2 > truncation_thresholds(labels, cfg), e2, 0.0)


def weighted_residual_terms(outputs: np.ndarray, labels: np.ndarray,
                            importances: np.ndarray, cfg: LossConfig = _DEFAULT):
    """Loss, its gradient at the outputs, and the active (untruncated) set.

    loss = mean_n importance_n * ||outputs_n - onehot(label_n)||_T. The
    gradient rows of truncated samples are exactly zero, so backprop can skip
    them; `active` holds the surviving sample indices.
    """
    outputs = np.asarray(outputs, dtype=np.float64)
    n = outputs.shape[0]
    if n == 0:
        raise ValueError("empty batch")
    imps = np.asarray(importances, dtype=np.float64)
    res = outputs - label_vectors(labels)
    e2 = np.linalg.norm(res, axis=1)
    active_mask = e2 > truncation_thresholds(labels, cfg)
    loss = float((imps * e2 * active_mask).sum() / n)
    upstream = np.zeros_like(res)
    act = np.flatnonzero(active_mask)
    if act.size:
        upstream[act] = (imps[act] / (n * e2[act]))[:, None] * res[act]
    return loss, upstream, act


def batch_loss(model: CnnModel, samples, y_star, cfg: LossConfig = _DEFAULT):
    """Objective of Eq.-style batches: (loss, active sample indices).

    `samples` is a list of (PatchTensor, MotionState, label) with every
    sample's box taken from the same frame as the reference state `y_star`;
    importances are recomputed from the box overlaps. Uses the fused output.
    """
    if not samples:
        raise ValueError("empty batch")
    patches = np.stack([np.asarray(p.values, dtype=np.float64) for p, _, _ in samples])
    ref = y_star.to_box() if hasattr(y_star, "to_box") else Box(*y_star)
    thetas = np.array([overlap(state.to_box(), ref) for _, state, _ in samples])
    labels = np.array([lab for _, _, lab in samples])
    fwd = forward_full_batch(model, patches, keep_cache=False)
    loss, _, active = weighted_residual_terms(fwd.fused, labels,
                                              importance_delta(thetas), cfg)
    return loss, active
