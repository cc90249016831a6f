"""Synthetic sequences for desk-scale experiments and end-to-end tests."""

from __future__ import annotations

import numpy as np
from scipy.ndimage import uniform_filter

from .cues import RawFrame
from .geometry import Box


def textured_square(side: int, seed: int) -> np.ndarray:
    """High-contrast checker texture with a bit of fixed noise, in [0.1, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side]
    checker = (((yy // 5) + (xx // 5)) % 2).astype(np.float64)
    tex = 0.15 + 0.7 * checker + rng.uniform(-0.08, 0.08, (side, side))
    return np.clip(tex, 0.1, 1.0)


def clutter_background(height: int, width: int, seed: int) -> np.ndarray:
    """Smooth random blobs: cluttered but locally low-gradient, in [0.2, 0.8]."""
    rng = np.random.default_rng(seed)
    blobs = uniform_filter(rng.uniform(0.0, 1.0, (height, width)), size=15, mode="wrap")
    lo, hi = blobs.min(), blobs.max()
    return 0.2 + 0.6 * (blobs - lo) / max(hi - lo, 1e-12)


def moving_square_sequence(n_frames: int = 100, height: int = 160, width: int = 400,
                           side: int = 40, step: float = 3.0, seed: int = 0,
                           start: tuple[int, int] = (12, 60),
                           velocity: tuple[float, float] = (1.0, 0.0),
                           noise: float = 0.01,
                           occluded_frames: frozenset[int] | set[int] = frozenset(),
                           ) -> tuple[list[RawFrame], list[Box]]:
    """Textured square moving `step` px/frame over cluttered noise.

    The square bounces off the frame borders. Frames listed in
    `occluded_frames` have the target painted over with background (it is
    still annotated there). Returns (frames, ground-truth boxes), 1-indexed.
    """
    rng = np.random.default_rng(seed)
    target = textured_square(side, seed + 1)
    background = clutter_background(height, width, seed + 2)

    vnorm = float(np.hypot(*velocity))
    vx = step * velocity[0] / vnorm
    vy = step * velocity[1] / vnorm
    x, y = float(start[0]), float(start[1])

    frames: list[RawFrame] = []
    boxes: list[Box] = []
    for t in range(1, n_frames + 1):
        canvas = background + rng.normal(0.0, noise, background.shape)
        ix, iy = int(round(x)), int(round(y))
        if t not in occluded_frames:
            canvas[iy:iy + side, ix:ix + side] = target
        frames.append(RawFrame(np.clip(canvas, 0.0, 1.0), frame_index=t))
        boxes.append(Box(float(ix), float(iy), float(side), float(side)))
        x += vx
        y += vy
        if x < 2 or x + side > width - 2:
            vx = -vx
            x += 2 * vx
        if y < 2 or y + side > height - 2:
            vy = -vy
            y += 2 * vy
    return frames, boxes


def static_square_sequence(n_frames: int = 100, seed: int = 0, noise: float = 0.01,
                           height: int = 120, width: int = 200, side: int = 40,
                           occluded_frames: frozenset[int] | set[int] = frozenset(),
                           ) -> tuple[list[RawFrame], list[Box]]:
    """Target that never moves; only per-frame sensor noise changes."""
    return moving_square_sequence(
        n_frames=n_frames, height=height, width=width, side=side, step=0.0,
        seed=seed, start=(width // 2 - side // 2, height // 2 - side // 2),
        velocity=(1.0, 0.0), noise=noise, occluded_frames=occluded_frames)
