"""Boxes and the 3-DOF motion state (center location plus relative scale)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

PATCH_SIZE = 32  # side length of network input patches; scale = height / PATCH_SIZE


class Box(NamedTuple):
    """Axis-aligned rectangle: top-left corner, width and height, in pixels."""

    x: float
    y: float
    w: float
    h: float

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    def area(self) -> float:
        return self.w * self.h

    def intersects_frame(self, width: float, height: float) -> bool:
        return self.x < width and self.y < height and self.x + self.w > 0 and self.y + self.h > 0

    def clamped(self, width: float, height: float) -> "Box":
        """Intersection with the frame rectangle [0, width) x [0, height)."""
        x0 = min(max(self.x, 0.0), float(width))
        y0 = min(max(self.y, 0.0), float(height))
        x1 = min(max(self.x + self.w, 0.0), float(width))
        y1 = min(max(self.y + self.h, 0.0), float(height))
        return Box(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class MotionState:
    """Object hypothesis: box center plus relative scale (height / 32).

    The aspect ratio is inherited from the initial annotation and never
    perturbed, so a hypothesis has three degrees of freedom.
    """

    cx: float
    cy: float
    scale: float
    aspect: float

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if not self.aspect > 0:
            raise ValueError(f"aspect must be positive, got {self.aspect}")

    @property
    def height(self) -> float:
        return PATCH_SIZE * self.scale

    @property
    def width(self) -> float:
        return self.aspect * self.height

    def to_box(self) -> Box:
        h = self.height
        w = self.aspect * h
        return Box(self.cx - w / 2.0, self.cy - h / 2.0, w, h)

    @classmethod
    def from_box(cls, box: Sequence[float]) -> "MotionState":
        b = Box(*box)
        if b.w <= 0 or b.h <= 0:
            raise ValueError(f"degenerate box {b}")
        return cls(cx=b.cx, cy=b.cy, scale=b.h / PATCH_SIZE, aspect=b.w / b.h)


def boxes_of(states: Sequence[MotionState]) -> np.ndarray:
    """(N, 4) x/y/w/h array for a list of states."""
    out = np.empty((len(states), 4), dtype=np.float64)
    for i, s in enumerate(states):
        out[i] = s.to_box()
    return out
