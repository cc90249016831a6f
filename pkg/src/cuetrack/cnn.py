"""Forward/backward evaluation of the per-cue networks and the fusion layer.

Each cue plane runs through its own fixed-topology network

    (32x32) -> conv 13x13x12 -> ReLU -> maxpool2 -> (10x10x12)
            -> conv 7x7, 12->18 full connectivity -> ReLU -> maxpool2 -> (2x2x18)
            -> fc 72->8 -> ReLU -> head 8->2

and the fusion layer maps the concatenated 8-D penultimate features of all
cues (24-D) linearly to a 2-D score pair. Convolutions are valid-mode (no
padding); pooling is 2x2 stride 2 with first-max tie-breaking. Everything is
float64 and bit-reproducible for a fixed model and input.
"""

from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NUM_CUES = 3
INPUT_SIZE = 32
CONV1_K, CONV1_OUT = 13, 12
CONV2_K, CONV2_IN, CONV2_OUT = 7, 12, 18
FC1_IN, FC1_OUT = 72, 8  # 2*2*18 flattened -> 8
HEAD_OUT = 2
FUSED_IN = NUM_CUES * FC1_OUT  # 24

INIT_WEIGHT_RANGE = 0.05

_CUE_SHAPES = {
    "conv1_w": (CONV1_K, CONV1_K, CONV1_OUT),
    "conv1_b": (CONV1_OUT,),
    "conv2_w": (CONV2_IN, CONV2_K, CONV2_K, CONV2_OUT),
    "conv2_b": (CONV2_OUT,),
    "fc1_w": (FC1_IN, FC1_OUT),
    "fc1_b": (FC1_OUT,),
    "head_w": (FC1_OUT, HEAD_OUT),
    "head_b": (HEAD_OUT,),
}


class ScorePair(NamedTuple):
    """2-D confidence output: positive score s1, negative score s2."""

    s1: float
    s2: float


@dataclass
class CueNetWeights:
    """All weights of one cue network; see _CUE_SHAPES for layouts."""

    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    head_w: np.ndarray
    head_b: np.ndarray

    def __post_init__(self):
        for name, shape in _CUE_SHAPES.items():
            arr = getattr(self, name)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")

    def arrays(self):
        for f in dataclasses.fields(self):
            yield f.name, getattr(self, f.name)

    def copy(self) -> "CueNetWeights":
        return CueNetWeights(**{name: arr.copy() for name, arr in self.arrays()})

    @classmethod
    def zeros(cls) -> "CueNetWeights":
        return cls(**{name: np.zeros(shape) for name, shape in _CUE_SHAPES.items()})


@dataclass
class CnnModel:
    """Per-cue networks plus the 24->2 fusion layer."""

    cues: tuple[CueNetWeights, ...]
    fusion_w: np.ndarray  # (24, 2); rows 8k..8k+8 belong to cue k
    fusion_b: np.ndarray  # (2,)

    def __post_init__(self):
        if len(self.cues) != NUM_CUES:
            raise ValueError(f"expected {NUM_CUES} cue networks")
        if self.fusion_w.shape != (FUSED_IN, HEAD_OUT) or self.fusion_b.shape != (HEAD_OUT,):
            raise ValueError("bad fusion layer shapes")

    def copy(self) -> "CnnModel":
        return CnnModel(
            cues=tuple(c.copy() for c in self.cues),
            fusion_w=self.fusion_w.copy(),
            fusion_b=self.fusion_b.copy(),
        )

    def arrays(self):
        for k, cue in enumerate(self.cues):
            for name, arr in cue.arrays():
                yield f"cue{k}.{name}", arr
        yield "fusion_w", self.fusion_w
        yield "fusion_b", self.fusion_b

    def digest(self) -> str:
        """SHA-256 over all weights; changes iff some weight changes."""
        h = hashlib.sha256()
        for name, arr in self.arrays():
            h.update(name.encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    @classmethod
    def zeros(cls) -> "CnnModel":
        return cls(
            cues=tuple(CueNetWeights.zeros() for _ in range(NUM_CUES)),
            fusion_w=np.zeros((FUSED_IN, HEAD_OUT)),
            fusion_b=np.zeros(HEAD_OUT),
        )


def init_model(rng_seed: int) -> CnnModel:
    """Fresh model: weights uniform in [-0.05, 0.05], biases zero."""
    rng = np.random.default_rng(rng_seed)

    def w(shape):
        return rng.uniform(-INIT_WEIGHT_RANGE, INIT_WEIGHT_RANGE, size=shape)

    cues = []
    for _ in range(NUM_CUES):
        cues.append(CueNetWeights(
            conv1_w=w(_CUE_SHAPES["conv1_w"]), conv1_b=np.zeros(CONV1_OUT),
            conv2_w=w(_CUE_SHAPES["conv2_w"]), conv2_b=np.zeros(CONV2_OUT),
            fc1_w=w(_CUE_SHAPES["fc1_w"]), fc1_b=np.zeros(FC1_OUT),
            head_w=w(_CUE_SHAPES["head_w"]), head_b=np.zeros(HEAD_OUT),
        ))
    return CnnModel(cues=tuple(cues), fusion_w=w((FUSED_IN, HEAD_OUT)),
                    fusion_b=np.zeros(HEAD_OUT))


@dataclass
class CueCache:
    """Activations retained by a cue forward pass for backprop.

    im2col matrices are recomputed from `planes`/`p1` in backward instead of
    being cached; they dominate memory otherwise.
    """

    planes: np.ndarray  # (N, 32, 32)
    z1: np.ndarray      # (N, 20, 20, 12) conv1 pre-activation
    idx1: np.ndarray    # (N, 10, 10, 12) argmax within each 2x2 pool window
    p1: np.ndarray      # (N, 10, 10, 12) pooled
    z2: np.ndarray      # (N, 4, 4, 18)
    idx2: np.ndarray    # (N, 2, 2, 18)
    flat: np.ndarray    # (N, 72) pooled conv2 output, flattened
    z3: np.ndarray      # (N, 8) fc1 pre-activation
    a3: np.ndarray      # (N, 8) penultimate features

    def subset(self, idx: np.ndarray) -> "CueCache":
        return CueCache(**{f.name: getattr(self, f.name)[idx]
                           for f in dataclasses.fields(self)})


@dataclass
class FullForward:
    """Batched forward results over all cues plus the fusion layer."""

    fused: np.ndarray                 # (N, 2)
    cue_heads: list[np.ndarray]       # per cue (N, 2)
    features: np.ndarray              # (N, 24) concatenated penultimate features
    caches: list[CueCache] | None


def _conv_valid(x: np.ndarray, w_mat: np.ndarray, k: int,
                bias: np.ndarray | None = None) -> np.ndarray:
    """Valid convolution of (N, H, W[, C]) with a ([C*]k*k, O) kernel matrix.

    Evaluated one output row at a time so the im2col buffer stays cache-sized;
    the full buffer is ~170x the input and dominates runtime otherwise.
    Kernel-matrix rows are ordered [channel-major,] then window row, column.
    """
    n, h, w = x.shape[:3]
    oh, ow = h - k + 1, w - k + 1
    out_ch = w_mat.shape[1]
    out = np.empty((n, oh, ow, out_ch))
    for r in range(oh):
        v = sliding_window_view(x[:, r:r + k], (k, k), axis=(1, 2)).reshape(n * ow, -1)
        row = v @ w_mat
        if bias is not None:
            row += bias
        out[:, r] = row.reshape(n, ow, out_ch)
    return out


def _conv_weight_grad(x: np.ndarray, dz: np.ndarray, k: int) -> np.ndarray:
    """d(loss)/d(kernel matrix) for _conv_valid: sum_n cols_n^T @ dz_n."""
    n, oh, ow, out_ch = dz.shape
    acc = None
    for r in range(oh):
        v = sliding_window_view(x[:, r:r + k], (k, k), axis=(1, 2)).reshape(n * ow, -1)
        term = v.T @ dz[:, r].reshape(n * ow, out_ch)
        acc = term if acc is None else acc + term
    return acc


def _maxpool2(x: np.ndarray):
    n, h, w, c = x.shape
    cand = (x.reshape(n, h // 2, 2, w // 2, 2, c)
             .transpose(0, 1, 3, 5, 2, 4)
             .reshape(n, h // 2, w // 2, c, 4))
    idx = cand.argmax(axis=-1)  # first max wins on ties
    out = np.take_along_axis(cand, idx[..., None], axis=-1)[..., 0]
    return out, idx.astype(np.int8)


def _maxpool2_backward(dout: np.ndarray, idx: np.ndarray) -> np.ndarray:
    n, h2, w2, c = dout.shape
    cand = np.zeros((n, h2, w2, c, 4))
    np.put_along_axis(cand, idx.astype(np.intp)[..., None], dout[..., None], axis=-1)
    return (cand.reshape(n, h2, w2, c, 2, 2)
                .transpose(0, 1, 4, 2, 5, 3)
                .reshape(n, h2 * 2, w2 * 2, c))


def forward_cue_batch(net: CueNetWeights, planes: np.ndarray, keep_cache: bool = True):
    """Run one cue network over (N, 32, 32) planes.

    Returns (features (N, 8), head_out (N, 2), CueCache | None).
    """
    if planes.ndim != 3 or planes.shape[1:] != (INPUT_SIZE, INPUT_SIZE):
        raise ValueError(f"expected (N, {INPUT_SIZE}, {INPUT_SIZE}) planes, got {planes.shape}")
    n = planes.shape[0]
    z1 = _conv_valid(planes, net.conv1_w.reshape(-1, CONV1_OUT), CONV1_K, net.conv1_b)
    p1, idx1 = _maxpool2(np.maximum(z1, 0.0))
    z2 = _conv_valid(p1, net.conv2_w.reshape(-1, CONV2_OUT), CONV2_K, net.conv2_b)
    p2, idx2 = _maxpool2(np.maximum(z2, 0.0))
    flat = p2.reshape(n, FC1_IN)
    z3 = flat @ net.fc1_w + net.fc1_b
    a3 = np.maximum(z3, 0.0)
    z4 = a3 @ net.head_w + net.head_b
    cache = CueCache(planes, z1, idx1, p1, z2, idx2, flat, z3, a3) if keep_cache else None
    return a3, z4, cache


def forward_cue(net: CueNetWeights, patch_plane: np.ndarray):
    """Single-plane wrapper: returns (features8, head ScorePair, cache)."""
    a3, z4, cache = forward_cue_batch(net, np.asarray(patch_plane, dtype=np.float64)[None])
    return a3[0], ScorePair(float(z4[0, 0]), float(z4[0, 1])), cache


def forward_full_batch(model: CnnModel, patches: np.ndarray, keep_cache: bool = True) -> FullForward:
    """All cues plus fusion over (N, 32, 32, NUM_CUES) patches."""
    if patches.ndim != 4 or patches.shape[1:] != (INPUT_SIZE, INPUT_SIZE, NUM_CUES):
        raise ValueError(f"expected (N, 32, 32, {NUM_CUES}) patches, got {patches.shape}")
    patches = np.asarray(patches, dtype=np.float64)
    feats = []
    heads = []
    caches: list[CueCache] | None = [] if keep_cache else None
    for k, net in enumerate(model.cues):
        a3, z4, cache = forward_cue_batch(net, np.ascontiguousarray(patches[:, :, :, k]),
                                          keep_cache=keep_cache)
        feats.append(a3)
        heads.append(z4)
        if keep_cache:
            caches.append(cache)
    features = np.concatenate(feats, axis=1)  # cue order is fixed
    fused = features @ model.fusion_w + model.fusion_b
    return FullForward(fused=fused, cue_heads=heads, features=features, caches=caches)


def forward_full(model: CnnModel, patch) -> tuple[ScorePair, list[ScorePair], np.ndarray, FullForward]:
    """Single-patch wrapper; accepts a PatchTensor or a (32, 32, K) array."""
    values = getattr(patch, "values", patch)
    fwd = forward_full_batch(model, np.asarray(values, dtype=np.float64)[None])
    fused = ScorePair(float(fwd.fused[0, 0]), float(fwd.fused[0, 1]))
    per_cue = [ScorePair(float(h[0, 0]), float(h[0, 1])) for h in fwd.cue_heads]
    return fused, per_cue, fwd.features[0], fwd


def cnn_scores(outputs: np.ndarray) -> np.ndarray:
    """Scalar confidence s1 * exp(s1 - s2) for (N, 2) score pairs."""
    out = np.asarray(outputs, dtype=np.float64)
    return out[..., 0] * np.exp(out[..., 0] - out[..., 1])


def cnn_score(pair) -> float:
    s1, s2 = float(pair[0]), float(pair[1])
    return s1 * float(np.exp(s1 - s2))


def backward_cue(net: CueNetWeights, cache: CueCache, upstream: np.ndarray) -> CueNetWeights:
    """Gradients of sum_n upstream[n] . head_out[n] w.r.t. one cue's weights.

    `upstream` is (N, 2), the gradient of the scalar loss at the cue head
    output; rows for samples excluded from the loss are simply not passed in.
    """
    n = upstream.shape[0]
    if cache.planes.shape[0] != n:
        raise ValueError("cache/upstream batch size mismatch")
    grads = CueNetWeights.zeros()
    grads.head_w[:] = cache.a3.T @ upstream
    grads.head_b[:] = upstream.sum(axis=0)
    dz3 = (upstream @ net.head_w.T) * (cache.z3 > 0)
    grads.fc1_w[:] = cache.flat.T @ dz3
    grads.fc1_b[:] = dz3.sum(axis=0)
    dp2 = (dz3 @ net.fc1_w.T).reshape(n, 2, 2, CONV2_OUT)
    dz2 = _maxpool2_backward(dp2, cache.idx2) * (cache.z2 > 0)
    grads.conv2_w[:] = _conv_weight_grad(cache.p1, dz2, CONV2_K).reshape(
        CONV2_IN, CONV2_K, CONV2_K, CONV2_OUT)
    grads.conv2_b[:] = dz2.sum(axis=(0, 1, 2))
    # input gradient of conv2 = full correlation with the flipped kernels
    padded = np.pad(dz2, ((0, 0), (CONV2_K - 1,) * 2, (CONV2_K - 1,) * 2, (0, 0)))
    w_rot = (net.conv2_w[:, ::-1, ::-1, :]
             .transpose(3, 1, 2, 0)
             .reshape(-1, CONV2_IN))
    dp1 = _conv_valid(padded, w_rot, CONV2_K)
    dz1 = _maxpool2_backward(dp1, cache.idx1) * (cache.z1 > 0)
    grads.conv1_w[:] = _conv_weight_grad(cache.planes, dz1, CONV1_K).reshape(
        CONV1_K, CONV1_K, CONV1_OUT)
    grads.conv1_b[:] = dz1.sum(axis=(0, 1, 2))
    return grads


def fusion_block_gradients(features: np.ndarray, upstream: np.ndarray,
                           cue_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of the fused loss w.r.t. cue `cue_index`'s fusion rows + bias."""
    lo = cue_index * FC1_OUT
    g_w = features[:, lo:lo + FC1_OUT].T @ upstream
    g_b = upstream.sum(axis=0)
    return g_w, g_b


def backward(model: CnnModel, fwd: FullForward, upstream: np.ndarray, target) -> CnnModel:
    """Gradients for the selected weight subset, zeros everywhere else.

    `target` is ("cue", k) for cue k's conv/fc/head weights driven by its own
    head output, or ("fusion", k) for the fusion rows of cue k (plus the
    fusion bias) driven by the fused output. `upstream` is the (N, 2) loss
    gradient at the corresponding output.
    """
    kind, k = target
    if not 0 <= k < NUM_CUES:
        raise ValueError(f"cue index {k} out of range")
    if fwd.caches is None:
        raise ValueError("forward pass was run without keep_cache")
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.ndim == 1:
        upstream = upstream[None, :]
    grads = CnnModel.zeros()
    if kind == "cue":
        cue_grads = backward_cue(model.cues[k], fwd.caches[k], upstream)
        grads = CnnModel(
            cues=tuple(cue_grads if i == k else CueNetWeights.zeros()
                       for i in range(NUM_CUES)),
            fusion_w=grads.fusion_w, fusion_b=grads.fusion_b)
    elif kind == "fusion":
        g_w, g_b = fusion_block_gradients(fwd.features, upstream, k)
        grads.fusion_w[k * FC1_OUT:(k + 1) * FC1_OUT] = g_w
        grads.fusion_b[:] = g_b
    else:
        raise ValueError(f"unknown backward target kind {kind!r}")
    return grads
