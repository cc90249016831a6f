"""One-pass evaluation metrics: precision / success rates and their curves."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Box
from .loss import overlap

DEFAULT_TP_THRESHOLD = 20.0
DEFAULT_TSR_THRESHOLD = 0.6
TP_CURVE_THRESHOLDS = tuple(float(t) for t in range(1, 51))
TSR_CURVE_THRESHOLDS = tuple(round(0.05 * i, 2) for i in range(21))


@dataclass(frozen=True)
class SequenceRecord:
    """Per-frame predictions against ground truth for one sequence.

    Ground-truth entries may be None (annotation gaps); those frames are
    skipped from both numerator and denominator of every metric.
    """

    name: str
    predictions: tuple[Box, ...]
    ground_truth: tuple[Box | None, ...]

    def __post_init__(self):
        if len(self.predictions) != len(self.ground_truth):
            raise ValueError(
                f"{len(self.predictions)} predictions vs "
                f"{len(self.ground_truth)} ground-truth boxes")
        if not self.predictions:
            raise ValueError("empty sequence record")

    def valid_pairs(self):
        return [(p, g) for p, g in zip(self.predictions, self.ground_truth)
                if g is not None]


@dataclass(frozen=True)
class MetricCurve:
    thresholds: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if not self.thresholds:
            raise ValueError("empty threshold list")
        if len(self.thresholds) != len(self.values):
            raise ValueError("thresholds/values length mismatch")


def center_error(pred, gt) -> float:
    """Euclidean distance between box centers, in pixels."""
    p, g = Box(*pred), Box(*gt)
    return float(np.hypot(p.cx - g.cx, p.cy - g.cy))


def tp_at(seq: SequenceRecord, tau_d: float) -> float:
    """Fraction of frames whose center error is within tau_d pixels."""
    pairs = seq.valid_pairs()
    hits = sum(1 for p, g in pairs if center_error(p, g) <= tau_d)
    return hits / len(pairs)


def tsr_at(seq: SequenceRecord, tau_o: float) -> float:
    """Fraction of frames whose overlap strictly exceeds tau_o."""
    pairs = seq.valid_pairs()
    hits = sum(1 for p, g in pairs if overlap(p, g) > tau_o)
    return hits / len(pairs)


def curves(seq: SequenceRecord,
           tp_thresholds: Sequence[float] = TP_CURVE_THRESHOLDS,
           tsr_thresholds: Sequence[float] = TSR_CURVE_THRESHOLDS
           ) -> tuple[MetricCurve, MetricCurve]:
    """Precision curve over distance thresholds, success curve over overlaps."""
    if not tp_thresholds or not tsr_thresholds:
        raise ValueError("threshold lists must be nonempty")
    pairs = seq.valid_pairs()
    errors = np.array([center_error(p, g) for p, g in pairs])
    overlaps = np.array([overlap(p, g) for p, g in pairs])
    tp = MetricCurve(tuple(tp_thresholds),
                     tuple(float((errors <= t).mean()) for t in tp_thresholds))
    tsr = MetricCurve(tuple(tsr_thresholds),
                      tuple(float((overlaps > t).mean()) for t in tsr_thresholds))
    assert all(a <= b for a, b in zip(tp.values, tp.values[1:])), "precision curve must be non-decreasing"
    assert all(a >= b for a, b in zip(tsr.values, tsr.values[1:])), "success curve must be non-increasing"
    return tp, tsr


def write_report(path: str | Path, seq: SequenceRecord) -> None:
    """CSV report: headline TP/TSR plus both full curves."""
    tp_curve, tsr_curve = curves(seq)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "threshold", "value"])
        writer.writerow(["TP", f"{DEFAULT_TP_THRESHOLD:g}",
                         f"{tp_at(seq, DEFAULT_TP_THRESHOLD):.6f}"])
        writer.writerow(["TSR", f"{DEFAULT_TSR_THRESHOLD:g}",
                         f"{tsr_at(seq, DEFAULT_TSR_THRESHOLD):.6f}"])
        for t, v in zip(tp_curve.thresholds, tp_curve.values):
            writer.writerow(["TP_curve", f"{t:g}", f"{v:.6f}"])
        for t, v in zip(tsr_curve.thresholds, tsr_curve.values):
            writer.writerow(["TSR_curve", f"{t:g}", f"{v:.6f}"])
