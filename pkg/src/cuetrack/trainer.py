"""Iterative SGD over cues and the fusion layer, plus the lazy-update gate.

Training rotates through the cue networks: step m touches only cue
k = m mod K (descending that cue's own head loss at the larger rate) and the
fusion rows belonging to cue k (descending the fused loss at the smaller
rate). The loop stops early once the fused minibatch loss reaches epsilon and
always returns the best model observed along the trajectory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cnn import FC1_OUT, NUM_CUES, CnnModel, backward_cue, forward_full_batch, fusion_block_gradients
from .config import LossConfig, SamplerConfig, TrainConfig
from .loss import weighted_residual_terms
from .pool import SamplePool, StoredSample

_DEFAULT_TRAIN = TrainConfig()

TraceFn = Callable[[int, int, int, float], None]  # (frame, step, cue, loss)


def should_update(current_loss: float, cfg: TrainConfig = _DEFAULT_TRAIN) -> bool:
    """Lazy gate: retrain only when the fresh-minibatch loss is clearly high."""
    return current_loss > cfg.lazy_multiplier * cfg.epsilon


@dataclass
class StepStats:
    loss_fused: float
    loss_cue: float
    cue_index: int
    visits_fused: int  # samples reaching the fusion backward pass
    visits_cue: int    # samples reaching the cue backward pass
    applied: bool      # False when the stop threshold was already met


@dataclass
class TrainReport:
    losses: list[float] = field(default_factory=list)       # fused loss per step
    cue_losses: list[float] = field(default_factory=list)
    steps_taken: int = 0
    best_step: int = 0
    updated: bool = False
    backward_visits_fused: int = 0
    backward_visits_cue: int = 0
    minibatches: list[list[StoredSample]] | None = None

    @property
    def best_loss(self) -> float:
        return self.losses[self.best_step]


def batch_arrays(samples: list[StoredSample]):
    """Stack a minibatch into (patches, labels, importances) arrays."""
    patches = np.stack([np.asarray(s.patch.values, dtype=np.float64) for s in samples])
    labels = np.array([s.label for s in samples], dtype=np.int64)
    importances = np.array([s.importance for s in samples], dtype=np.float64)
    return patches, labels, importances


def sgd_step(model: CnnModel, patches: np.ndarray, labels: np.ndarray,
             importances: np.ndarray, cue_index: int,
             train_cfg: TrainConfig = _DEFAULT_TRAIN,
             loss_cfg: LossConfig = LossConfig(),
             stop_loss: float | None = None) -> StepStats:
    """One coordinate-descent step, mutating `model` in place.

    Computes the fused minibatch loss first; when `stop_loss` is given and
    already met, returns without touching any weight. Otherwise descends cue
    `cue_index` on its head loss and the matching fusion block on the fused
    loss, visiting only samples whose truncated residual is nonzero.
    """
    fwd = forward_full_batch(model, patches, keep_cache=True)
    loss_fused, up_fused, act_fused = weighted_residual_terms(
        fwd.fused, labels, importances, loss_cfg)
    head = fwd.cue_heads[cue_index]
    loss_cue, up_cue, act_cue = weighted_residual_terms(
        head, labels, importances, loss_cfg)
    if stop_loss is not None and loss_fused <= stop_loss:
        return StepStats(loss_fused, loss_cue, cue_index, 0, 0, applied=False)

    if act_cue.size:
        grads = backward_cue(model.cues[cue_index],
                             fwd.caches[cue_index].subset(act_cue),
                             up_cue[act_cue])
        net = model.cues[cue_index]
        for name, g in grads.arrays():
            getattr(net, name)[...] -= train_cfg.lr_cue * g
    if act_fused.size:
        g_w, g_b = fusion_block_gradients(fwd.features[act_fused],
                                          up_fused[act_fused], cue_index)
        lo = cue_index * FC1_OUT
        model.fusion_w[lo:lo + FC1_OUT] -= train_cfg.lr_fuse * g_w
        model.fusion_b -= train_cfg.lr_fuse * g_b
    return StepStats(loss_fused, loss_cue, cue_index,
                     int(act_fused.size), int(act_cue.size), applied=True)


def it_sgd(model: CnnModel, pool: SamplePool, rng: np.random.Generator, *,
           steps: int,
           train_cfg: TrainConfig = _DEFAULT_TRAIN,
           sampler_cfg: SamplerConfig = SamplerConfig(),
           loss_cfg: LossConfig = LossConfig(),
           keep_minibatches: bool = False,
           trace: TraceFn | None = None,
           frame_index: int = 0) -> tuple[CnnModel, TrainReport]:
    """Iterative SGD with robust temporal sampling over the pool.

    Runs at most `steps` coordinate-descent steps, drawing a fresh minibatch
    per step (or reusing the first one when resample_per_step is off), and
    stopping once the fused loss reaches epsilon. The input model is left
    untouched; the returned model is the snapshot with the lowest recorded
    loss.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    work = model.copy()
    report = TrainReport(minibatches=[] if keep_minibatches else None)
    best_model = model.copy()
    best_loss = np.inf
    batch = None
    for m in range(steps):
        if batch is None or train_cfg.resample_per_step:
            batch = pool.draw_minibatch(sampler_cfg, rng)
        if keep_minibatches:
            report.minibatches.append(batch)
        patches, labels, importances = batch_arrays(batch)
        before = work.copy()
        stats = sgd_step(work, patches, labels, importances, cue_index=m % NUM_CUES,
                         train_cfg=train_cfg, loss_cfg=loss_cfg,
                         stop_loss=train_cfg.epsilon)
        report.losses.append(stats.loss_fused)
        report.cue_losses.append(stats.loss_cue)
        report.backward_visits_fused += stats.visits_fused
        report.backward_visits_cue += stats.visits_cue
        if trace is not None:
            trace(frame_index, m, stats.cue_index, stats.loss_fused)
        if stats.loss_fused < best_loss:
            best_loss = stats.loss_fused
            best_model = before  # snapshot predates this step's update
            report.best_step = m
        if not stats.applied:
            break
        report.steps_taken += 1
    report.updated = report.steps_taken > 0
    return best_model, report
