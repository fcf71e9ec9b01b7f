"""A from-scratch two-layer recurrent network in float64 numpy.

Cell per layer: ``h_t = tanh(W_x x_t + W_h h_{t-1} + b_h)`` with an affine
output map ``y_t = W_y h2_t + b_y``.  The default architecture is 4 input
features, two hidden layers of 64 units, 2 outputs per step; hidden states
start at zero.  Forward/backward are pure and bit-reproducible; backward is
plain backpropagation through time and is verified against central finite
differences in the test suite.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from .errors import MissingCheckpoint, NumericalError, ShapeError

DEFAULT_DIMS = (4, 64, 64, 2)  # input, hidden1, hidden2, output

# Canonical tensor order for flatten/unflatten and checkpointing.
TENSOR_ORDER = ("wx1", "wh1", "bh1", "wx2", "wh2", "bh2", "wy", "by")


@dataclass(frozen=True)
class RnnParams:
    """All weights and biases; also reused as the gradient shape-tree."""

    wx1: np.ndarray
    wh1: np.ndarray
    bh1: np.ndarray
    wx2: np.ndarray
    wh2: np.ndarray
    bh2: np.ndarray
    wy: np.ndarray
    by: np.ndarray

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (
            self.wx1.shape[0],
            self.wx1.shape[1],
            self.wx2.shape[1],
            self.wy.shape[1],
        )

    @property
    def size(self) -> int:
        return sum(getattr(self, name).size for name in TENSOR_ORDER)

    def tensors(self):
        return [getattr(self, name) for name in TENSOR_ORDER]


def tensor_shapes(dims=DEFAULT_DIMS) -> dict[str, tuple[int, ...]]:
    n_in, h1, h2, n_out = dims
    return {
        "wx1": (n_in, h1),
        "wh1": (h1, h1),
        "bh1": (h1,),
        "wx2": (h1, h2),
        "wh2": (h2, h2),
        "bh2": (h2,),
        "wy": (h2, n_out),
        "by": (n_out,),
    }


def init_params(rng: np.random.Generator, dims=DEFAULT_DIMS) -> RnnParams:
    """Glorot-uniform weights, zero biases; deterministic per generator state."""
    arrays = {}
    for name, shape in tensor_shapes(dims).items():
        if len(shape) == 1:
            arrays[name] = np.zeros(shape)
        else:
            limit = np.sqrt(6.0 / (shape[0] + shape[1]))
            arrays[name] = rng.uniform(-limit, limit, size=shape)
    return RnnParams(**arrays)


def zeros_like_params(p: RnnParams) -> RnnParams:
    return RnnParams(**{n: np.zeros_like(getattr(p, n)) for n in TENSOR_ORDER})


def map_params(fn, *trees: RnnParams) -> RnnParams:
    """Apply ``fn`` tensor-wise across parameter trees."""
    return RnnParams(
        **{n: fn(*(getattr(t, n) for t in trees)) for n in TENSOR_ORDER}
    )


def forward(params: RnnParams, X: np.ndarray):
    """Run the network over a batch of input sequences.

    X has shape (B, T, n_in).  Returns (Y, cache) where Y is (B, T, n_out)
    and the cache holds every hidden state for backpropagation through time.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[2] != params.wx1.shape[0]:
        raise ShapeError(f"expected (B, T, {params.wx1.shape[0]}) input, got {X.shape}")
    B, T, _ = X.shape
    h1w = params.wx1.shape[1]
    h2w = params.wx2.shape[1]
    H1 = np.zeros((B, T + 1, h1w))
    H2 = np.zeros((B, T + 1, h2w))
    for t in range(T):
        H1[:, t + 1] = np.tanh(
            X[:, t] @ params.wx1 + H1[:, t] @ params.wh1 + params.bh1
        )
        H2[:, t + 1] = np.tanh(
            H1[:, t + 1] @ params.wx2 + H2[:, t] @ params.wh2 + params.bh2
        )
    Y = H2[:, 1:] @ params.wy + params.by
    if not np.all(np.isfinite(Y)):
        raise NumericalError("forward pass produced non-finite outputs")
    return Y, (X, H1, H2)


def backward(params: RnnParams, cache, dY: np.ndarray) -> RnnParams:
    """Exact gradient of a scalar loss with upstream dL/dY via BPTT."""
    X, H1, H2 = cache
    B, T, _ = X.shape
    dY = np.asarray(dY, dtype=float)
    if dY.shape != (B, T, params.wy.shape[1]):
        raise ShapeError(f"output gradient shape {dY.shape} mismatches forward cache")
    g = {n: np.zeros_like(getattr(params, n)) for n in TENSOR_ORDER}
    dh1_next = np.zeros((B, params.wx1.shape[1]))
    dh2_next = np.zeros((B, params.wx2.shape[1]))
    for t in range(T - 1, -1, -1):
        h1, h2 = H1[:, t + 1], H2[:, t + 1]
        g["wy"] += h2.T @ dY[:, t]
        g["by"] += dY[:, t].sum(axis=0)
        dh2 = dY[:, t] @ params.wy.T + dh2_next
        da2 = dh2 * (1.0 - h2 * h2)
        g["wx2"] += h1.T @ da2
        g["wh2"] += H2[:, t].T @ da2
        g["bh2"] += da2.sum(axis=0)
        dh2_next = da2 @ params.wh2.T
        dh1 = da2 @ params.wx2.T + dh1_next
        da1 = dh1 * (1.0 - h1 * h1)
        g["wx1"] += X[:, t].T @ da1
        g["wh1"] += H1[:, t].T @ da1
        g["bh1"] += da1.sum(axis=0)
        dh1_next = da1 @ params.wh1.T
    return RnnParams(**g)


@dataclass(frozen=True)
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: RnnParams
    v: RnnParams
    step: int
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: RnnParams, lr: float = 1e-3) -> AdamState:
    return AdamState(
        m=zeros_like_params(params), v=zeros_like_params(params), step=0, lr=lr
    )


def adam_update(
    params: RnnParams, grads: RnnParams, state: AdamState
) -> tuple[RnnParams, AdamState]:
    """One bias-corrected Adam step; returns new params and state."""
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    m = map_params(lambda m, g: b1 * m + (1 - b1) * g, state.m, grads)
    v = map_params(lambda v, g: b2 * v + (1 - b2) * g * g, state.v, grads)
    bc1 = 1 - b1**t
    bc2 = 1 - b2**t
    new = map_params(
        lambda p, mh, vh: p - state.lr * (mh / bc1) / (np.sqrt(vh / bc2) + state.eps),
        params,
        m,
        v,
    )
    return new, AdamState(
        m=m, v=v, step=t, lr=state.lr, beta1=state.beta1, beta2=state.beta2,
        eps=state.eps,
    )


def flatten(params: RnnParams) -> np.ndarray:
    """Canonical flat float64 view of all parameters."""
    return np.concatenate([t.ravel() for t in params.tensors()])


def unflatten(vec: np.ndarray, dims=DEFAULT_DIMS) -> RnnParams:
    """Inverse of :func:`flatten` for the given architecture."""
    vec = np.asarray(vec, dtype=float)
    shapes = tensor_shapes(dims)
    total = sum(int(np.prod(s)) for s in shapes.values())
    if vec.shape != (total,):
        raise ShapeError(f"expected flat vector of length {total}, got {vec.shape}")
    arrays = {}
    at = 0
    for name, shape in shapes.items():
        n = int(np.prod(shape))
        arrays[name] = vec[at : at + n].reshape(shape).copy()
        at += n
    return RnnParams(**arrays)


CHECKPOINT_MAGIC = b"RMCK"
CHECKPOINT_VERSION = 1


def save_checkpoint(path, params: RnnParams, norm_specs: dict, provenance: dict):
    """Binary checkpoint: magic, version, JSON header (architecture,
    normalization bounds, provenance), then the canonical flat parameter
    vector as little-endian float64."""
    header = {
        "dims": list(params.dims),
        "norm_specs": {
            kind: {"lo": list(map(float, spec.lo)), "hi": list(map(float, spec.hi))}
            for kind, spec in norm_specs.items()
        },
        "provenance": provenance,
    }
    blob = json.dumps(header, sort_keys=True).encode()
    flat = flatten(params).astype("<f8")
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<I", CHECKPOINT_VERSION))
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)
        f.write(struct.pack("<Q", flat.size))
        f.write(flat.tobytes())


def load_checkpoint(path):
    """Read a checkpoint; returns (params, norm_specs_raw, provenance)."""
    try:
        with open(path, "rb") as f:
            data = f.read()
    except FileNotFoundError as exc:
        raise MissingCheckpoint(str(path)) from exc
    if data[:4] != CHECKPOINT_MAGIC:
        raise MissingCheckpoint(f"{path} is not a model checkpoint")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != CHECKPOINT_VERSION:
        raise MissingCheckpoint(f"unsupported checkpoint version {version}")
    (hlen,) = struct.unpack_from("<I", data, 8)
    header = json.loads(data[12 : 12 + hlen].decode())
    (n,) = struct.unpack_from("<Q", data, 12 + hlen)
    flat = np.frombuffer(data, dtype="<f8", count=n, offset=20 + hlen).astype(float)
    params = unflatten(flat, dims=tuple(header["dims"]))
    return params, header["norm_specs"], header["provenance"]
