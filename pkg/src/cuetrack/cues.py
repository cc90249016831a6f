"""Frame preprocessing: cue planes and normalized 32x32 patch extraction.

A frame is converted once into a stack of three cue planes. Grayscale input
yields two locally contrast-normalized planes (different window radii) plus a
gradient-magnitude plane; color input keeps the hue and value channels and
takes the gradient of the value channel. Patches are cropped from the stack
with bilinear resampling and each cue is rescaled per patch into [0, 10].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from matplotlib.colors import rgb_to_hsv
from scipy.ndimage import uniform_filter

from .config import CueConfig
from .geometry import Box, MotionState, PATCH_SIZE

NUM_CUES = 3
PATCH_VALUE_MAX = 10.0
COLOR_CUE_KINDS = ("hue", "value", "gradient")

_DEFAULT_CUES = CueConfig()


@dataclass(frozen=True)
class RawFrame:
    """One video frame: grayscale (H, W) or RGB (H, W, 3), values in [0, 1]."""

    data: np.ndarray
    frame_index: int

    def __post_init__(self):
        d = self.data
        if d.ndim not in (2, 3) or (d.ndim == 3 and d.shape[2] != 3):
            raise ValueError(f"expected (H, W) or (H, W, 3) pixel data, got {d.shape}")
        if d.shape[0] < PATCH_SIZE or d.shape[1] < PATCH_SIZE:
            raise ValueError(f"frame smaller than {PATCH_SIZE}x{PATCH_SIZE}: {d.shape}")
        if not np.isfinite(d).all():
            raise ValueError("frame contains non-finite pixels")
        if d.min() < 0.0 or d.max() > 1.0:
            raise ValueError("pixel values must lie in [0, 1]")
        if self.frame_index < 1:
            raise ValueError("frame_index must be a positive integer")

    @property
    def is_color(self) -> bool:
        return self.data.ndim == 3

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CueStack:
    """Per-frame stack of NUM_CUES preprocessed planes, shape (H, W, NUM_CUES)."""

    data: np.ndarray
    kinds: tuple[str, ...]
    frame_index: int

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != NUM_CUES:
            raise ValueError(f"cue stack must be (H, W, {NUM_CUES}), got {self.data.shape}")
        if len(self.kinds) != NUM_CUES:
            raise ValueError("one kind string per cue plane required")
        if not np.isfinite(self.data).all():
            raise ValueError("cue stack contains non-finite values")
        grad = self.data[:, :, self.kinds.index("gradient")]
        if grad.min() < 0:
            raise ValueError("gradient plane must be non-negative")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class PatchTensor:
    """32x32xNUM_CUES sample cropped from a CueStack, values in [0, 10]."""

    values: np.ndarray
    state: MotionState
    flipped: bool

    def __post_init__(self):
        if self.values.shape != (PATCH_SIZE, PATCH_SIZE, NUM_CUES):
            raise ValueError(f"bad patch shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("patch contains non-finite values")
        if self.values.min() < 0.0 or self.values.max() > PATCH_VALUE_MAX:
            raise ValueError("patch values must lie in [0, %g]" % PATCH_VALUE_MAX)


def local_contrast_normalize(image: np.ndarray, r_mu: int, r_sigma: int,
                             kappa: float = _DEFAULT_CUES.kappa) -> np.ndarray:
    """(pixel - windowed mean) / (windowed std + kappa), replicated borders.

    The mean window spans (2*r_mu+1)^2 pixels, the std window
    (2*r_sigma+1)^2; kappa keeps flat regions from blowing up.
    """
    if r_mu < 1 or r_sigma < 1:
        raise ValueError("window radii must be >= 1")
    img = np.asarray(image, dtype=np.float64)
    mean = uniform_filter(img, size=2 * r_mu + 1, mode="nearest")
    m1 = uniform_filter(img, size=2 * r_sigma + 1, mode="nearest")
    m2 = uniform_filter(img * img, size=2 * r_sigma + 1, mode="nearest")
    var = np.clip(m2 - m1 * m1, 0.0, None)  # rounding can push it slightly below 0
    return (img - mean) / (np.sqrt(var) + kappa)


def gradient_magnitude(image: np.ndarray) -> np.ndarray:
    """Central-difference gradient magnitude with replicated borders."""
    img = np.asarray(image, dtype=np.float64)
    padded = np.pad(img, 1, mode="edge")
    gx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    gy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return np.hypot(gx, gy)


def build_cue_stack(frame: RawFrame, cfg: CueConfig = _DEFAULT_CUES) -> CueStack:
    """Three cue planes per frame; see the module docstring for the recipe."""
    if frame.is_color:
        hsv = rgb_to_hsv(frame.data)
        planes = (hsv[:, :, 0], hsv[:, :, 2], gradient_magnitude(hsv[:, :, 2]))
        kinds = COLOR_CUE_KINDS
    else:
        (rm1, rs1), (rm2, rs2) = cfg.lcn_radii
        planes = (
            local_contrast_normalize(frame.data, rm1, rs1, cfg.kappa),
            local_contrast_normalize(frame.data, rm2, rs2, cfg.kappa),
            gradient_magnitude(frame.data),
        )
        kinds = (f"lcn{rm1}", f"lcn{rm2}", "gradient")
    return CueStack(np.stack(planes, axis=-1), kinds, frame.frame_index)


def extract_patches(stack: CueStack, boxes, flipped: bool = False) -> np.ndarray:
    """Crop + bilinearly resample boxes to (N, 32, 32, NUM_CUES) in [0, 10].

    Sampling uses pixel-center conventions; coordinates falling outside the
    frame replicate the nearest edge pixel. Each cue of each patch is
    independently min-max rescaled to [0, PATCH_VALUE_MAX]; a constant cue
    maps to the midpoint. Boxes that miss the frame entirely are an error.
    """
    data = stack.data
    h_frame, w_frame = data.shape[:2]
    boxes = np.atleast_2d(np.asarray(boxes, dtype=np.float64))
    if boxes.shape[1] != 4:
        raise ValueError("boxes must be (N, 4) x/y/w/h")
    if np.any(boxes[:, 2] <= 0) or np.any(boxes[:, 3] <= 0):
        raise ValueError("boxes must have positive size")
    outside = (
        (boxes[:, 0] >= w_frame) | (boxes[:, 0] + boxes[:, 2] <= 0)
        | (boxes[:, 1] >= h_frame) | (boxes[:, 1] + boxes[:, 3] <= 0)
    )
    if outside.any():
        raise ValueError(f"box {int(np.flatnonzero(outside)[0])} lies fully outside the frame")

    n = boxes.shape[0]
    grid = np.arange(PATCH_SIZE, dtype=np.float64) + 0.5
    xs = boxes[:, 0:1] + grid[None, :] * (boxes[:, 2:3] / PATCH_SIZE) - 0.5
    ys = boxes[:, 1:2] + grid[None, :] * (boxes[:, 3:4] / PATCH_SIZE) - 0.5
    np.clip(xs, 0.0, w_frame - 1.0, out=xs)
    np.clip(ys, 0.0, h_frame - 1.0, out=ys)

    out = np.empty((n, PATCH_SIZE, PATCH_SIZE, NUM_CUES), dtype=np.float64)
    for start in range(0, n, 256):  # chunk the 4-corner gather to bound memory
        sl = slice(start, min(start + 256, n))
        out[sl] = _bilinear(data, ys[sl], xs[sl])

    mn = out.min(axis=(1, 2), keepdims=True)
    mx = out.max(axis=(1, 2), keepdims=True)
    span = mx - mn
    flat = span <= 0
    np.divide(out - mn, span, out=out, where=~flat)
    out *= PATCH_VALUE_MAX
    out = np.where(flat, PATCH_VALUE_MAX / 2.0, out)
    np.clip(out, 0.0, PATCH_VALUE_MAX, out=out)
    if flipped:
        out = out[:, :, ::-1, :]
    return np.ascontiguousarray(out)


def _bilinear(data: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    h_frame, w_frame = data.shape[:2]
    x0 = np.minimum(np.floor(xs), w_frame - 2).astype(np.intp)
    y0 = np.minimum(np.floor(ys), h_frame - 2).astype(np.intp)
    fx = (xs - x0)[:, None, :, None]
    fy = (ys - y0)[:, :, None, None]
    iy0 = y0[:, :, None]
    ix0 = x0[:, None, :]
    g00 = data[iy0, ix0, :]
    g01 = data[iy0, ix0 + 1, :]
    g10 = data[iy0 + 1, ix0, :]
    g11 = data[iy0 + 1, ix0 + 1, :]
    top = g00 * (1.0 - fx) + g01 * fx
    bottom = g10 * (1.0 - fx) + g11 * fx
    return top * (1.0 - fy) + bottom * fy


def extract_patch(stack: CueStack, state: MotionState, flipped: bool = False) -> PatchTensor:
    """Single-box wrapper around extract_patches."""
    values = extract_patches(stack, np.asarray(state.to_box())[None, :], flipped=flipped)[0]
    return PatchTensor(values=values, state=state, flipped=flipped)
