"""Dense float64 kernel: affine layers, ReLU, softmax, Adam, gradient checking.

Tensors are plain 2-D ``numpy.float64`` arrays. Layers expose explicit
forward/backward functions; there is no autodiff graph.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NumericError, UsageError, ValidationError


def _shape(a):
    return "x".join(str(s) for s in np.shape(a))


def check_finite(a, what="tensor"):
    if not np.all(np.isfinite(a)):
        raise NumericError(f"non-finite values in {what}")
    return a


def affine_forward(x, w, b):
    """out[i, j] = sum_k x[i, k] * w[k, j] + b[j]."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if x.ndim != 2 or w.ndim != 2 or x.shape[1] != w.shape[0]:
        raise DimensionError(f"cannot multiply x[{_shape(x)}] by w[{_shape(w)}]")
    if b.shape != (w.shape[1],):
        raise DimensionError(f"bias[{_shape(b)}] does not match w[{_shape(w)}]")
    return x @ w + b


def affine_backward(dout, x, w):
    """Gradients (dx, dw, db) of an affine layer given upstream ``dout``."""
    return dout @ w.T, x.T @ dout, dout.sum(axis=0)


def relu(x):
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def relu_backward(dout, x):
    # Subgradient 0 at exactly 0.
    return dout * (x > 0)


def softmax(z, temperature=1.0):
    """Row-wise softmax of ``z / temperature`` (vector or 2-D array)."""
    if not temperature > 0:
        raise ValidationError(f"softmax temperature must be > 0, got {temperature}")
    z = np.asarray(z, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax(z, temperature=1.0):
    if not temperature > 0:
        raise ValidationError(f"softmax temperature must be > 0, got {temperature}")
    z = np.asarray(z, dtype=np.float64) / temperature
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


class ParamSet:
    """Named float64 parameters, each with a gradient buffer of the same shape."""

    def __init__(self, params=None):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name, value):
        value = np.array(value, dtype=np.float64)
        self.params[name] = value
        self.grads[name] = np.zeros_like(value)

    def __getitem__(self, name):
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def names(self):
        return list(self.params)

    def zero_grad(self):
        for g in self.grads.values():
            g.fill(0.0)

    def copy(self):
        return ParamSet({k: v.copy() for k, v in self.params.items()})

    def num_values(self):
        return sum(v.size for v in self.params.values())


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = field(default=None, repr=False)
    v: dict = field(default=None, repr=False)

    @classmethod
    def init(cls, params: ParamSet, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        state = cls(lr=lr, beta1=beta1, beta2=beta2, eps=eps)
        state.m = {k: np.zeros_like(p) for k, p in params.params.items()}
        state.v = {k: np.zeros_like(p) for k, p in params.params.items()}
        return state


def adam_step(params: ParamSet, state: AdamState):
    """One bias-corrected Adam update in place, then zero the gradients."""
    if state.m is None or state.v is None:
        raise UsageError("Adam state is not initialized; use AdamState.init(params)")
    if set(state.m) != set(params.params):
        raise UsageError("Adam state does not match the parameter set")
    state.step += 1
    t = state.step
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, p in params.params.items():
        g = params.grads[name]
        m = state.m[name]
        v = state.v[name]
        if m.shape != p.shape:
            raise UsageError(f"moment buffer for {name!r} has shape {m.shape}, parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    params.zero_grad()
    return params, state


def grad_check(f, params: ParamSet, eps=1e-5, floor=1e-6):
    """Max relative error between analytic and central-difference gradients.

    ``f(params)`` must return ``(loss, grads)`` with ``grads`` keyed like
    ``params``. Per coordinate the error is ``|a - n| / max(|a|, |n|, floor)``;
    the floor keeps round-off on near-zero coordinates from dominating.
    """
    if not eps > 0:
        raise ValidationError("eps must be > 0")
    loss, grads = f(params)
    if not np.isfinite(loss):
        raise NumericError(f"loss is not finite: {loss}")
    worst = 0.0
    for name, p in params.params.items():
        analytic = np.asarray(grads[name], dtype=np.float64)
        flat = p.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f(params)[0]
            flat[i] = orig - eps
            down = f(params)[0]
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise NumericError(f"loss is not finite near {name}[{i}]")
            numeric = (up - down) / (2.0 * eps)
            a = analytic.reshape(-1)[i]
            denom = max(abs(a), abs(numeric), floor)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
