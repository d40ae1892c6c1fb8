"""Per-frame MLP encoder, max set pooling, and a linear classifier head.

Checkpoint layout (little-endian)::

    magic "ILGM" | version u32 = 1 | D u32 | H u32 | E u32 | C u32
    W1 (D*H) | b1 (H) | W2 (H*E) | b2 (E) | Wc (E*C) | bc (C)    all f64, row-major
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from ._binio import Reader, Writer, write_atomic
from .errors import DimensionError, ValidationError
from .nn import ParamSet, affine_backward, affine_forward, relu, relu_backward

MAGIC = b"ILGM"
VERSION = 1
PARAM_ORDER = ("W1", "b1", "W2", "b2", "Wc", "bc")


@dataclass(frozen=True)
class ModelDims:
    frame_dim: int
    hidden: int = 64
    embedding: int = 32
    num_classes: int = 2

    def validate(self):
        bad = [k for k, v in vars(self).items() if not (isinstance(v, int) and v > 0)]
        if bad:
            raise ValidationError(f"model dims must be positive integers: {bad}")
        return self

    def shapes(self):
        D, H, E, C = self.frame_dim, self.hidden, self.embedding, self.num_classes
        return {"W1": (D, H), "b1": (H,), "W2": (H, E), "b2": (E,), "Wc": (E, C), "bc": (C,)}


class GaitModel:
    """Live, trainable model. ``num_classes`` is fixed at construction."""

    def __init__(self, dims: ModelDims, params: ParamSet):
        self.dims = dims
        self.params = params

    @property
    def num_classes(self):
        return self.dims.num_classes

    def forward(self, windows, cache=False):
        """Signatures (B, E) and logits (B, C) for a (B, T, D) stack of windows."""
        x = _as_batch(windows, self.dims.frame_dim)
        p = self.params.params
        B, T, D = x.shape
        flat = x.reshape(B * T, D)
        z1 = affine_forward(flat, p["W1"], p["b1"])
        h1 = relu(z1)
        z2 = affine_forward(h1, p["W2"], p["b2"])
        h2 = relu(z2)
        sig, arg = kernels.maxpool_forward(h2.reshape(B, T, -1))
        logits = affine_forward(sig, p["Wc"], p["bc"])
        if cache:
            return sig, logits, (flat, z1, h1, z2, sig, arg, T)
        return sig, logits

    def backward(self, dlogits, cache):
        """Accumulate parameter gradients for upstream ``dlogits``."""
        flat, z1, h1, z2, sig, arg, T = cache
        p, g = self.params.params, self.params.grads
        dsig, dWc, dbc = affine_backward(dlogits, sig, p["Wc"])
        dz2 = kernels.maxpool_relu_backward(dsig, arg, sig, T).reshape(z2.shape)
        dh1, dW2, db2 = affine_backward(dz2, h1, p["W2"])
        dz1 = relu_backward(dh1, z1)
        _, dW1, db1 = affine_backward(dz1, flat, p["W1"])
        for name, grad in (("W1", dW1), ("b1", db1), ("W2", dW2), ("b2", db2), ("Wc", dWc), ("bc", dbc)):
            g[name] += grad

    def signature(self, sample):
        window = sample.window if hasattr(sample, "window") else sample
        return self.forward(np.asarray(window)[None])[0][0]

    def snapshot(self):
        return ModelSnapshot(self)


class ModelSnapshot:
    """Frozen deep copy of a model, used as distillation teacher."""

    def __init__(self, model):
        self.dims = model.dims
        self._model = GaitModel(model.dims, model.params.copy())
        for v in self._model.params.params.values():
            v.setflags(write=False)

    @property
    def params(self):
        return self._model.params

    @property
    def num_classes(self):
        return self.dims.num_classes

    def forward(self, windows):
        return self._model.forward(windows)

    def signature(self, sample):
        return self._model.signature(sample)

    def snapshot(self):
        return self

    def thaw(self):
        """A trainable GaitModel with a copy of these parameters."""
        return GaitModel(self.dims, self._model.params.copy())


def _as_batch(windows, frame_dim):
    if isinstance(windows, np.ndarray):
        x = windows
    else:
        windows = list(windows)
        if windows and hasattr(windows[0], "window"):
            windows = [s.window for s in windows]
        x = np.stack(windows) if windows else np.zeros((0, 1, frame_dim))
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] != frame_dim:
        raise DimensionError(f"expected windows of shape Bx T x{frame_dim}, got {'x'.join(map(str, x.shape))}")
    return x


def init_model(dims: ModelDims, seed=0) -> GaitModel:
    """Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)); biases zero."""
    dims.validate()
    rng = np.random.default_rng(seed)
    params = ParamSet()
    for name, shape in dims.shapes().items():
        if name.startswith("b"):
            params.add(name, np.zeros(shape))
        else:
            bound = 1.0 / math.sqrt(shape[0])
            params.add(name, rng.uniform(-bound, bound, size=shape))
    return GaitModel(dims, params)


def model_to_bytes(model) -> bytes:
    w = Writer()
    w.raw(MAGIC)
    w.u32(VERSION)
    d = model.dims
    for v in (d.frame_dim, d.hidden, d.embedding, d.num_classes):
        w.u32(v)
    for name in PARAM_ORDER:
        w.floats(model.params[name])
    return bytes(w.buf)


def model_from_bytes(data: bytes) -> GaitModel:
    r = Reader(data, "model checkpoint")
    r.magic(MAGIC)
    r.version({VERSION})
    dims = ModelDims(r.u32("D"), r.u32("H"), r.u32("E"), r.u32("C")).validate()
    params = ParamSet()
    for name, shape in dims.shapes().items():
        params.add(name, r.floats(int(np.prod(shape)), name).reshape(shape))
    r.expect_end()
    return GaitModel(dims, params)


def save_model(model, path):
    write_atomic(path, model_to_bytes(model))


def load_model(path) -> GaitModel:
    return model_from_bytes(Path(path).read_bytes())
