"""Dataclass configs for every tunable constant, with JSON round-trip.

All defaults are the values the tracker ships with; a JSON config file may
override any subset of them (unknown keys are rejected so typos fail loudly).
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


@dataclass(frozen=True)
class CueConfig:
    """Preprocessing of raw frames into the three cue planes."""

    # (mean radius, std radius) pairs for the two contrast-normalized cues
    # used on grayscale input; color input uses H/V channels instead.
    lcn_radii: tuple[tuple[int, int], tuple[int, int]] = ((8, 8), (12, 12))
    kappa: float = 1e-4  # variance floor in the contrast normalizer

    def __post_init__(self):
        for r_mu, r_sigma in self.lcn_radii:
            if r_mu < 1 or r_sigma < 1:
                raise ValueError("contrast-normalization radii must be >= 1")
        if self.kappa <= 0:
            raise ValueError("kappa must be positive")


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.0025  # residual-norm truncation threshold
    u: float = 3.0        # positive-side sharpening: tau+ = beta / (1 + u)
    label_overlap_threshold: float = 0.5

    def __post_init__(self):
        if self.beta < 0 or self.u < 0:
            raise ValueError("beta and u must be non-negative")


@dataclass(frozen=True)
class SamplerConfig:
    sigma: float = 10.0        # temporal decay of negative-sample weights
    v: float = 0.5             # peak-set ratio: keep scores above v * best
    n_pos: int = 32            # positives per minibatch
    n_neg: int = 32            # negatives per minibatch
    n_harvest: int = 50        # stored proposals per frame (doubled by flips)
    harvest_std_mult: float = 2.0  # harvest spread relative to test particles

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0.0 < self.v < 1.0:
            raise ValueError("v must lie in (0, 1)")
        if min(self.n_pos, self.n_neg, self.n_harvest) < 1:
            raise ValueError("batch and harvest sizes must be >= 1")


@dataclass(frozen=True)
class TrainConfig:
    epsilon: float = 5e-3      # target loss; training stops at or below it
    lr_cue: float = 5e-2       # learning rate for per-cue conv/fc weights
    lr_fuse: float = 5e-3      # learning rate for the fusion block
    steps_bootstrap: int = 128  # budget for the first-frame fit
    steps_online: int = 60      # budget for per-frame refits
    lazy_multiplier: float = 2.0  # refit only when loss > lazy_multiplier * epsilon
    resample_per_step: bool = True  # False: one minibatch reused for all steps

    def __post_init__(self):
        if not self.lr_cue > self.lr_fuse > 0:
            raise ValueError("expected lr_cue > lr_fuse > 0")
        if self.epsilon < 0 or self.lazy_multiplier < 1:
            raise ValueError("bad epsilon / lazy_multiplier")
        if self.steps_bootstrap < 1 or self.steps_online < 1:
            raise ValueError("step budgets must be >= 1")


@dataclass(frozen=True)
class MotionConfig:
    n_particles: int = 1500
    std_xy_cap: float = 10.0      # std of center jitter = min(cap, factor * h)
    std_xy_factor: float = 0.5
    std_scale_factor: float = 0.01  # std of scale jitter = factor * h
    min_scale: float = 1.0 / 16.0   # floor keeping perturbed boxes non-degenerate

    def __post_init__(self):
        if self.n_particles < 1:
            raise ValueError("n_particles must be >= 1")
        if min(self.std_xy_cap, self.std_xy_factor, self.std_scale_factor) <= 0:
            raise ValueError("motion stds must be positive")

    def std_xy(self, h: float) -> float:
        return min(self.std_xy_cap, self.std_xy_factor * h)

    def std_scale(self, h: float) -> float:
        return self.std_scale_factor * h


@dataclass(frozen=True)
class TrackerConfig:
    cues: CueConfig = field(default_factory=CueConfig)
    loss: LossConfig = field(default_factory=LossConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    motion: MotionConfig = field(default_factory=MotionConfig)
    # Wall-clock ms per frame in the results CSV. Disable to make two runs
    # with the same seed produce byte-identical files.
    log_elapsed_ms: bool = True

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> "TrackerConfig":
        sections = {
            "cues": CueConfig,
            "loss": LossConfig,
            "sampler": SamplerConfig,
            "train": TrainConfig,
            "motion": MotionConfig,
        }
        kwargs: dict[str, Any] = {}
        for key, value in raw.items():
            if key in sections:
                kwargs[key] = _build(sections[key], value)
            elif key == "log_elapsed_ms":
                kwargs[key] = bool(value)
            else:
                raise ValueError(f"unknown config section {key!r}")
        return cls(**kwargs)

    @classmethod
    def from_json(cls, path: str | Path) -> "TrackerConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _build(cfg_cls, raw: dict[str, Any]):
    names = {f.name for f in dataclasses.fields(cfg_cls)}
    unknown = set(raw) - names
    if unknown:
        raise ValueError(f"unknown {cfg_cls.__name__} keys: {sorted(unknown)}")
    values = dict(raw)
    if "lcn_radii" in values:  # JSON has no tuples
        values["lcn_radii"] = tuple(tuple(pair) for pair in values["lcn_radii"])
    return cfg_cls(**values)
