"""cuetrack: online tracking-by-detection with a per-video multi-cue CNN."""

from .config import (CueConfig, LossConfig, MotionConfig, SamplerConfig,
                     TrackerConfig, TrainConfig)
from .geometry import Box, MotionState, PATCH_SIZE
from .cues import (CueStack, PatchTensor, RawFrame, build_cue_stack,
                   extract_patch, extract_patches, gradient_magnitude,
                   local_contrast_normalize)
from .cnn import (CnnModel, CueNetWeights, ScorePair, backward, cnn_score,
                  cnn_scores, forward_cue, forward_full, forward_full_batch,
                  init_model)
from .loss import (assign_label, batch_loss, importance_delta, overlap,
                   overlap_many, truncated_norm, truncated_norms,
                   weighted_residual_terms)
from .pool import FrameQuality, SamplePool, StoredSample, peak_set, prediction_quality
from .trainer import TrainReport, it_sgd, sgd_step, should_update
from .tracker import TrackResult, Tracker, infer, sample_particles
from .metrics import (MetricCurve, SequenceRecord, center_error, curves,
                      tp_at, tsr_at, write_report)
from .serialize import load_model, load_pool, save_model, save_pool

__version__ = "0.1.0"

__all__ = [
    "Box", "CnnModel", "CueConfig", "CueNetWeights", "CueStack", "FrameQuality",
    "LossConfig", "MetricCurve", "MotionConfig", "MotionState", "PATCH_SIZE",
    "PatchTensor", "RawFrame", "SamplePool", "SamplerConfig", "ScorePair",
    "SequenceRecord", "StoredSample", "TrackResult", "Tracker", "TrackerConfig",
    "TrainConfig", "TrainReport", "assign_label", "backward", "batch_loss",
    "build_cue_stack", "center_error", "cnn_score", "cnn_scores", "curves",
    "extract_patch", "extract_patches", "forward_cue", "forward_full",
    "forward_full_batch", "gradient_magnitude", "importance_delta", "infer",
    "init_model", "it_sgd", "load_model", "load_pool", "local_contrast_normalize",
    "overlap", "overlap_many", "peak_set", "prediction_quality", "sample_particles",
    "save_model", "save_pool", "sgd_step", "should_update", "tp_at", "tsr_at",
    "truncated_norm", "truncated_norms", "weighted_residual_terms", "write_report",
]
