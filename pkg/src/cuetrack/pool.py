"""Time-indexed sample storage, per-frame quality, and minibatch draws.

Positives are drawn near-uniformly over the whole history while negatives
concentrate sharply on the most recent frames; both sides are additionally
down-weighted by the estimated quality of the frame they were harvested from,
so frames suspected of contaminated labels (occlusion, bad detections)
contribute little. The pool is append-only: samples never mutate or expire.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SamplerConfig
from .cues import PatchTensor
from .geometry import MotionState

_DEFAULT = SamplerConfig()


@dataclass(frozen=True)
class StoredSample:
    patch: PatchTensor
    state: MotionState
    label: int        # 1 positive, 0 negative
    frame_index: int
    importance: float  # overlap-based training weight, in [0, 1]

    def __post_init__(self):
        if not 0.0 <= self.importance <= 1.0:
            raise ValueError("importance must lie in [0, 1]")


@dataclass(frozen=True)
class FrameQuality:
    frame_index: int
    q: float  # probability that the frame's labels are uncontaminated

    def __post_init__(self):
        if not 0.0 <= self.q <= 1.0:
            raise ValueError("q must lie in [0, 1]")


def peak_set(scores, star_score: float, v: float = _DEFAULT.v) -> np.ndarray:
    """Indices with score strictly above v * star_score, plus the argmax.

    The argmax is always a member so the set is never empty; `star_score`
    must be the maximum of `scores`.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValueError("empty score list")
    if star_score != s.max():
        raise ValueError("star_score must equal the maximum score")
    members = s > v * star_score
    members[int(np.argmax(s))] = True
    return np.flatnonzero(members)


def prediction_quality(frame_index: int, scores, importances, residual_norms,
                       v: float = _DEFAULT.v) -> FrameQuality:
    """Quality of one processed frame from its high-score samples.

    `residual_norms` are truncated norms of (output - label) for the same
    samples as `scores`; widely distributed high-scoring samples with large
    residuals (several competing peaks) push the quality down.
    """
    scores = np.asarray(scores, dtype=np.float64)
    peak = peak_set(scores, float(scores.max()), v)
    imps = np.asarray(importances, dtype=np.float64)
    res = np.asarray(residual_norms, dtype=np.float64)
    q = 1.0 - float((imps[peak] * res[peak]).mean())
    return FrameQuality(frame_index, min(max(q, 0.0), 1.0))


class SamplePool:
    """Append-only store of positive/negative samples plus frame qualities."""

    def __init__(self):
        self._pos: list[StoredSample] = []
        self._neg: list[StoredSample] = []
        self._pos_frames: list[int] = []
        self._neg_frames: list[int] = []
        self._quality: dict[int, float] = {}
        self._last_frame = 0

    def __len__(self) -> int:
        return len(self._pos) + len(self._neg)

    @property
    def n_pos(self) -> int:
        return len(self._pos)

    @property
    def n_neg(self) -> int:
        return len(self._neg)

    @property
    def last_frame(self) -> int:
        return self._last_frame

    @property
    def frame_qualities(self) -> dict[int, float]:
        return dict(self._quality)

    def positives(self) -> tuple[StoredSample, ...]:
        return tuple(self._pos)

    def negatives(self) -> tuple[StoredSample, ...]:
        return tuple(self._neg)

    def add_frame(self, frame_index: int, positives, negatives,
                  quality: FrameQuality) -> None:
        """Append one frame's harvest; frame indices must strictly increase."""
        if frame_index <= self._last_frame:
            raise ValueError(
                f"frame_index {frame_index} not greater than last {self._last_frame}")
        if quality.frame_index != frame_index:
            raise ValueError("quality computed for a different frame")
        for s in positives:
            if s.frame_index != frame_index or s.label != 1:
                raise ValueError("bad positive sample for this frame")
        for s in negatives:
            if s.frame_index != frame_index or s.label != 0:
                raise ValueError("bad negative sample for this frame")
        self._pos.extend(positives)
        self._neg.extend(negatives)
        self._pos_frames.extend([frame_index] * len(positives))
        self._neg_frames.extend([frame_index] * len(negatives))
        self._quality[frame_index] = quality.q
        self._last_frame = frame_index

    def draw_weights(self, cfg: SamplerConfig = _DEFAULT):
        """Unnormalized per-sample draw weights (positives, negatives).

        Positives: quality of the source frame (uniform otherwise).
        Negatives: exp(-sigma * (t - t')^2) * quality, t = newest frame.
        """
        q_pos = np.array([self._quality[t] for t in self._pos_frames])
        ages = self._last_frame - np.asarray(self._neg_frames, dtype=np.float64)
        q_neg = np.array([self._quality[t] for t in self._neg_frames])
        w_neg = np.exp(-cfg.sigma * ages ** 2) * q_neg
        return q_pos, w_neg

    def draw_minibatch(self, cfg: SamplerConfig = _DEFAULT,
                       rng: np.random.Generator | None = None) -> list[StoredSample]:
        """cfg.n_pos + cfg.n_neg samples drawn with replacement.

        If one side's weights all vanish (every frame fully distrusted), that
        side falls back to a uniform draw over the first frame, whose labels
        are ground truth.
        """
        if not self._pos or not self._neg:
            raise ValueError("pool must contain positives and negatives")
        rng = rng if rng is not None else np.random.default_rng()
        w_pos, w_neg = self.draw_weights(cfg)
        out: list[StoredSample] = []
        for samples, frames, weights, count in (
            (self._pos, self._pos_frames, w_pos, cfg.n_pos),
            (self._neg, self._neg_frames, w_neg, cfg.n_neg),
        ):
            total = weights.sum()
            if total > 0:
                p = weights / total
            else:
                first = min(frames)
                mask = np.asarray(frames) == first
                if not mask.any():
                    raise ValueError("no fallback samples available")
                p = mask / mask.sum()
            idx = rng.choice(len(samples), size=count, replace=True, p=p)
            out.extend(samples[i] for i in idx)
        return out
