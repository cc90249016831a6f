"""Flat binary container for models and sample pools.

Layout: a versioned magic string, a 4-byte little-endian header length, a
JSON header (kind, shapes, dtypes, free-form metadata), then the raw array
blobs concatenated in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any

import numpy as np

from .cnn import CnnModel, CueNetWeights, NUM_CUES
from .cues import PatchTensor
from .geometry import MotionState
from .pool import FrameQuality, SamplePool, StoredSample

MAGIC = b"CUETRACK-BLOB-v1\n"


def write_container(path: str | Path, kind: str, meta: dict[str, Any],
                    arrays: dict[str, np.ndarray]) -> None:
    entries = []
    blobs = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(arr)
        entries.append({"name": name, "shape": list(arr.shape), "dtype": arr.dtype.str})
        blobs.append(arr.tobytes())
    header = json.dumps({"kind": kind, "meta": meta, "arrays": entries}).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def read_container(path: str | Path) -> tuple[str, dict[str, Any], dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise ValueError(f"{path}: not a cuetrack container (bad magic)")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode())
        arrays = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            count = int(np.prod(entry["shape"])) if entry["shape"] else 1
            buf = fh.read(count * dtype.itemsize)
            arrays[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(entry["shape"]).copy()
    return header["kind"], header.get("meta", {}), arrays


def save_model(path: str | Path, model: CnnModel,
               cue_kinds: tuple[str, ...] = (), meta: dict[str, Any] | None = None) -> None:
    info = dict(meta or {})
    info["cue_kinds"] = list(cue_kinds)
    write_container(path, "model", info, dict(model.arrays()))


def load_model(path: str | Path) -> tuple[CnnModel, dict[str, Any]]:
    kind, meta, arrays = read_container(path)
    if kind != "model":
        raise ValueError(f"{path}: container holds {kind!r}, not a model")
    cues = []
    for k in range(NUM_CUES):
        fields = {name: arrays[f"cue{k}.{name}"]
                  for name in ("conv1_w", "conv1_b", "conv2_w", "conv2_b",
                               "fc1_w", "fc1_b", "head_w", "head_b")}
        cues.append(CueNetWeights(**fields))
    model = CnnModel(cues=tuple(cues), fusion_w=arrays["fusion_w"],
                     fusion_b=arrays["fusion_b"])
    return model, meta


def save_pool(path: str | Path, pool: SamplePool,
              meta: dict[str, Any] | None = None) -> None:
    """Debug dump of the full pool in the shared container format."""
    arrays: dict[str, np.ndarray] = {}
    for side, samples in (("pos", pool.positives()), ("neg", pool.negatives())):
        n = len(samples)
        patches = np.zeros((n, 32, 32, 3), dtype=np.float32)
        states = np.zeros((n, 4))
        frames = np.zeros(n, dtype=np.int64)
        imps = np.zeros(n)
        flipped = np.zeros(n, dtype=np.uint8)
        for i, s in enumerate(samples):
            patches[i] = s.patch.values
            states[i] = (s.state.cx, s.state.cy, s.state.scale, s.state.aspect)
            frames[i] = s.frame_index
            imps[i] = s.importance
            flipped[i] = 1 if s.patch.flipped else 0
        arrays.update({f"{side}_patches": patches, f"{side}_states": states,
                       f"{side}_frames": frames, f"{side}_importance": imps,
                       f"{side}_flipped": flipped})
    qualities = sorted(pool.frame_qualities.items())
    arrays["quality_frames"] = np.array([t for t, _ in qualities], dtype=np.int64)
    arrays["quality_values"] = np.array([q for _, q in qualities])
    write_container(path, "pool", meta or {}, arrays)


def load_pool(path: str | Path) -> SamplePool:
    kind, _, arrays = read_container(path)
    if kind != "pool":
        raise ValueError(f"{path}: container holds {kind!r}, not a pool")
    by_frame: dict[int, tuple[list[StoredSample], list[StoredSample]]] = {}
    for side, label in (("pos", 1), ("neg", 0)):
        for i in range(arrays[f"{side}_patches"].shape[0]):
            cx, cy, scale, aspect = arrays[f"{side}_states"][i]
            state = MotionState(cx=cx, cy=cy, scale=scale, aspect=aspect)
            patch = PatchTensor(arrays[f"{side}_patches"][i],
                                state, bool(arrays[f"{side}_flipped"][i]))
            sample = StoredSample(patch=patch, state=state, label=label,
                                  frame_index=int(arrays[f"{side}_frames"][i]),
                                  importance=float(arrays[f"{side}_importance"][i]))
            by_frame.setdefault(sample.frame_index, ([], []))[0 if label else 1].append(sample)
    pool = SamplePool()
    q = dict(zip(arrays["quality_frames"].tolist(), arrays["quality_values"].tolist()))
    for t in sorted(by_frame):
        pos, neg = by_frame[t]
        pool.add_frame(t, pos, neg, FrameQuality(t, float(q[t])))
    return pool
