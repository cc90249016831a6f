"""Sequence loading (image directory + ground-truth file) and results CSV."""

from __future__ import annotations

import csv
import re
from pathlib import Path
from typing import Iterator

import numpy as np
from PIL import Image

from .geometry import Box
from .tracker import TrackResult

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp", ".pgm", ".ppm", ".tif", ".tiff"}

RESULT_FIELDS = ("frame", "x", "y", "w", "h", "score", "quality", "updated", "ms")


def list_frame_files(seq_dir: str | Path) -> list[Path]:
    """Image files sorted by the number embedded in their name."""
    seq_dir = Path(seq_dir)
    files = [p for p in seq_dir.iterdir()
             if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES]
    if not files:
        raise FileNotFoundError(f"no image files found in {seq_dir}")

    def key(p: Path):
        digits = re.findall(r"\d+", p.stem)
        return (int(digits[-1]) if digits else 0, p.name)

    return sorted(files, key=key)


def load_frame(path: str | Path, frame_index: int):
    """8-bit image file -> RawFrame with pixel values in [0, 1]."""
    from .cues import RawFrame

    img = Image.open(path)
    if img.mode not in ("L", "RGB"):
        img = img.convert("RGB")
    data = np.asarray(img, dtype=np.float64) / 255.0
    return RawFrame(data=data, frame_index=frame_index)


def iter_frames(seq_dir: str | Path) -> Iterator:
    for i, path in enumerate(list_frame_files(seq_dir), start=1):
        yield load_frame(path, i)


def parse_gt_file(path: str | Path) -> list[Box | None]:
    """One "x,y,w,h" line per frame; malformed or degenerate lines become gaps."""
    boxes: list[Box | None] = []
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line:
            boxes.append(None)
            continue
        parts = re.split(r"[,\s]+", line)
        try:
            x, y, w, h = (float(v) for v in parts[:4])
        except (ValueError, IndexError):
            boxes.append(None)
            continue
        if not all(np.isfinite([x, y, w, h])) or w <= 0 or h <= 0:
            boxes.append(None)
        else:
            boxes.append(Box(x, y, w, h))
    if not boxes:
        raise ValueError(f"{path}: no ground-truth lines")
    return boxes


def write_results(path: str | Path, results: list[TrackResult]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULT_FIELDS)
        for r in results:
            writer.writerow([
                r.frame_index,
                f"{r.box.x:.3f}", f"{r.box.y:.3f}", f"{r.box.w:.3f}", f"{r.box.h:.3f}",
                f"{r.score:.6g}", f"{r.quality:.6f}",
                int(r.updated), f"{r.elapsed_ms:.3f}",
            ])


def read_results(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RESULT_FIELDS:
            raise ValueError(f"{path}: unexpected results header {reader.fieldnames}")
        rows = []
        for row in reader:
            rows.append({
                "frame": int(row["frame"]),
                "box": Box(float(row["x"]), float(row["y"]),
                           float(row["w"]), float(row["h"])),
                "score": float(row["score"]),
                "quality": float(row["quality"]),
                "updated": bool(int(row["updated"])),
                "ms": float(row["ms"]),
            })
    if not rows:
        raise ValueError(f"{path}: empty results file")
    return rows
