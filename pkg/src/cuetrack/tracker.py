"""Per-frame workflow: particle proposal, inference, quality, harvest, training.

The tracker carries a per-video model that is bootstrap-trained on the first
(annotated) frame and then refit lazily: each new frame is scored with 1500
Gaussian-perturbed box hypotheses, the winner becomes the detection, labeled
samples are harvested around it into the pool, and a fresh minibatch decides
whether the model actually needs another round of SGD.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cnn import CnnModel, cnn_scores, forward_full_batch, init_model
from .config import MotionConfig, TrackerConfig
from .cues import CueStack, PatchTensor, RawFrame, build_cue_stack, extract_patches
from .geometry import PATCH_SIZE, Box, MotionState, boxes_of
from .loss import (assign_label, importance_delta, label_vectors, overlap_many,
                   truncated_norms, weighted_residual_terms)
from .pool import FrameQuality, SamplePool, StoredSample, prediction_quality
from .trainer import TrainReport, batch_arrays, it_sgd, should_update

_SCORE_CHUNK = 256


@dataclass(frozen=True)
class TrackResult:
    frame_index: int
    box: Box            # clamped to the frame bounds
    score: float        # fused confidence of the winning hypothesis
    quality: float      # estimated label quality of this frame's harvest
    updated: bool       # whether the model was retrained on this frame
    elapsed_ms: float


def sample_particles(prev: MotionState, cfg: MotionConfig,
                     rng: np.random.Generator,
                     frame_size: tuple[int, int]) -> list[MotionState]:
    """Gaussian box hypotheses around the previous state, clamped to the frame.

    `frame_size` is (height, width). Centers are clamped inside the frame so
    every hypothesis intersects it; the scale is floored at cfg.min_scale.
    """
    arr = _perturb_states(prev, cfg.n_particles, cfg, rng, frame_size, std_mult=1.0)
    return [MotionState(cx=row[0], cy=row[1], scale=row[2], aspect=prev.aspect)
            for row in arr]


def _perturb_states(prev: MotionState, count: int, cfg: MotionConfig,
                    rng: np.random.Generator, frame_size: tuple[int, int],
                    std_mult: float) -> np.ndarray:
    h_frame, w_frame = frame_size
    h = prev.height
    stds = np.array([cfg.std_xy(h), cfg.std_xy(h), cfg.std_scale(h)]) * std_mult
    arr = rng.normal(loc=[prev.cx, prev.cy, prev.scale], scale=stds, size=(count, 3))
    np.clip(arr[:, 0], 0.0, w_frame - 1.0, out=arr[:, 0])
    np.clip(arr[:, 1], 0.0, h_frame - 1.0, out=arr[:, 1])
    np.clip(arr[:, 2], cfg.min_scale, None, out=arr[:, 2])
    return arr


def infer(model: CnnModel, stack: CueStack, particles: Sequence[MotionState]):
    """Best-scoring particle and the aligned score array (ties: lowest index)."""
    if len(particles) == 0:
        raise ValueError("empty particle set")
    scores, _ = score_states(model, stack, boxes_of(particles))
    return particles[int(np.argmax(scores))], scores


def score_states(model: CnnModel, stack: CueStack, boxes: np.ndarray):
    """(scores, fused outputs) for (N, 4) boxes, evaluated in chunks."""
    n = boxes.shape[0]
    fused = np.empty((n, 2))
    for start in range(0, n, _SCORE_CHUNK):
        sl = slice(start, min(start + _SCORE_CHUNK, n))
        patches = extract_patches(stack, boxes[sl])
        fused[sl] = forward_full_batch(model, patches, keep_cache=False).fused
    return cnn_scores(fused), fused


class Tracker:
    """Single-object tracker over one sequence; one instance per video."""

    def __init__(self, first_frame: RawFrame, gt_box, seed: int = 0,
                 config: TrackerConfig | None = None,
                 trace: "list | None" = None):
        """Bootstrap on the annotated first frame.

        `gt_box` is the x/y/w/h ground-truth annotation; `trace`, when given,
        collects (frame, step, cue, loss) training rows.
        """
        t0 = time.perf_counter()
        self.config = config or TrackerConfig()
        box = Box(*gt_box)
        if box.w <= 0 or box.h <= 0:
            raise ValueError(f"degenerate ground-truth box {box}")
        inside = (box.x >= 0 and box.y >= 0
                  and box.x + box.w <= first_frame.width
                  and box.y + box.h <= first_frame.height)
        if not inside:
            raise ValueError(f"ground-truth box {box} not inside the frame")

        seq = np.random.SeedSequence(seed)
        model_entropy, loop_entropy = seq.spawn(2)
        self.rng = np.random.default_rng(loop_entropy)
        self.model = init_model(int(model_entropy.generate_state(1)[0]))
        self.pool = SamplePool()
        self._trace = trace
        self.frame_index = first_frame.frame_index
        self.last_state = MotionState.from_box(box)
        self.aspect = self.last_state.aspect

        stack = build_cue_stack(first_frame, self.config.cues)
        positives, negatives = self._harvest(stack, self.last_state)
        if not positives or not negatives:
            raise RuntimeError("first-frame harvest must yield both classes")
        # the annotated frame is trusted unconditionally
        self.pool.add_frame(self.frame_index, positives, negatives,
                            FrameQuality(self.frame_index, 1.0))
        self.model, self.bootstrap_report = self._train(self.config.train.steps_bootstrap)

        scores, _ = score_states(self.model, stack, boxes_of([self.last_state]))
        self.first_result = TrackResult(
            frame_index=self.frame_index,
            box=box.clamped(first_frame.width, first_frame.height),
            score=float(scores[0]),
            quality=1.0,
            updated=True,
            elapsed_ms=self._elapsed(t0),
        )

    def _elapsed(self, t0: float) -> float:
        return (time.perf_counter() - t0) * 1000.0 if self.config.log_elapsed_ms else 0.0

    def _train(self, steps: int) -> tuple[CnnModel, TrainReport]:
        trace_fn = None
        if self._trace is not None:
            trace_fn = lambda *row: self._trace.append(row)
        return it_sgd(self.model, self.pool, self.rng, steps=steps,
                      train_cfg=self.config.train, sampler_cfg=self.config.sampler,
                      loss_cfg=self.config.loss, trace=trace_fn,
                      frame_index=self.frame_index)

    def _harvest(self, stack: CueStack, y_star: MotionState):
        """Labeled samples around the detection, each stored plain and flipped."""
        scfg = self.config.sampler
        thr = self.config.loss.label_overlap_threshold
        n = scfg.n_harvest
        frame_size = (stack.height, stack.width)
        arr = np.empty((n, 3))
        arr[0] = (y_star.cx, y_star.cy, y_star.scale)  # the detection itself
        arr[1:] = _perturb_states(y_star, n - 1, self.config.motion, self.rng,
                                  frame_size, std_mult=scfg.harvest_std_mult)
        boxes = _state_rows_to_boxes(arr, self.aspect)
        ref = y_star.to_box()
        thetas = overlap_many(boxes, ref)
        if not (thetas <= thr).any():
            # spread too narrow to hit negatives: push a few proposals well away
            for i, (dx, dy) in enumerate(((1.25, 0), (-1.25, 0), (0, 1.25), (0, -1.25))):
                row = n - 1 - i
                if row <= 0:
                    break
                arr[row] = (
                    min(max(y_star.cx + dx * ref.w, 0.0), frame_size[1] - 1.0),
                    min(max(y_star.cy + dy * ref.h, 0.0), frame_size[0] - 1.0),
                    y_star.scale,
                )
            boxes = _state_rows_to_boxes(arr, self.aspect)
            thetas = overlap_many(boxes, ref)

        importances = importance_delta(thetas)
        # float32 keeps the ever-growing pool at half the memory
        plain = extract_patches(stack, boxes, flipped=False).astype(np.float32)
        mirrored = plain[:, :, ::-1, :]
        positives: list[StoredSample] = []
        negatives: list[StoredSample] = []
        for i in range(n):
            label = assign_label(float(thetas[i]), thr)
            state = MotionState(cx=arr[i, 0], cy=arr[i, 1], scale=arr[i, 2],
                                aspect=self.aspect)
            for values, flipped in ((plain[i], False), (mirrored[i], True)):
                sample = StoredSample(
                    patch=PatchTensor(np.ascontiguousarray(values), state, flipped),
                    state=state, label=label, frame_index=self.frame_index,
                    importance=float(importances[i]))
                (positives if label == 1 else negatives).append(sample)
        return positives, negatives

    def step(self, frame: RawFrame) -> TrackResult:
        """Track one new frame: test, estimate quality, harvest, maybe retrain."""
        t0 = time.perf_counter()
        if frame.frame_index != self.frame_index + 1:
            raise ValueError(
                f"expected frame {self.frame_index + 1}, got {frame.frame_index}")
        self.frame_index = frame.frame_index
        stack = build_cue_stack(frame, self.config.cues)

        arr = _perturb_states(self.last_state, self.config.motion.n_particles,
                              self.config.motion, self.rng,
                              (frame.height, frame.width), std_mult=1.0)
        boxes = _state_rows_to_boxes(arr, self.aspect)
        scores, fused = score_states(self.model, stack, boxes)
        best = int(np.argmax(scores))
        y_star = MotionState(cx=arr[best, 0], cy=arr[best, 1], scale=arr[best, 2],
                             aspect=self.aspect)

        # label quality of this frame, judged on the high-scoring hypotheses
        thetas = overlap_many(boxes, y_star.to_box())
        labels = (thetas > self.config.loss.label_overlap_threshold).astype(np.int64)
        residuals = truncated_norms(fused - label_vectors(labels), labels,
                                    self.config.loss)
        quality = prediction_quality(self.frame_index, scores,
                                     importance_delta(thetas), residuals,
                                     self.config.sampler.v)

        positives, negatives = self._harvest(stack, y_star)
        self.pool.add_frame(self.frame_index, positives, negatives, quality)

        gate_batch = self.pool.draw_minibatch(self.config.sampler, self.rng)
        patches, lab, imps = batch_arrays(gate_batch)
        fwd = forward_full_batch(self.model, patches, keep_cache=False)
        gate_loss, _, _ = weighted_residual_terms(fwd.fused, lab, imps, self.config.loss)
        updated = should_update(gate_loss, self.config.train)
        if updated:
            self.model, _ = self._train(self.config.train.steps_online)

        self.last_state = y_star
        return TrackResult(
            frame_index=self.frame_index,
            box=y_star.to_box().clamped(frame.width, frame.height),
            score=float(scores[best]),
            quality=quality.q,
            updated=updated,
            elapsed_ms=self._elapsed(t0),
        )


def _state_rows_to_boxes(arr: np.ndarray, aspect: float) -> np.ndarray:
    h = PATCH_SIZE * arr[:, 2]
    w = aspect * h
    return np.stack([arr[:, 0] - w / 2.0, arr[:, 1] - h / 2.0, w, h], axis=1)
