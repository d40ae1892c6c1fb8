"""Shared helpers and independent oracles for the test suite."""
from __future__ import annotations

import numpy as np

from ilgaco.dataset import CovariateFactor, DatasetSpec, GaitSample
from ilgaco.losses import LossConfig, composite_loss
from ilgaco.model import ModelDims, init_model
from ilgaco.nn import grad_check


def tiny_spec(num_factors=3, **kw):
    base = dict(
        num_subjects=3,
        factors=tuple(CovariateFactor.viewpoint(i, 45 * i) for i in range(num_factors)),
        frames_per_sequence=40,
        frame_dim=6,
        train_sequences=2,
        test_sequences=1,
        noise_std=0.5,
        seed=5,
    )
    base.update(kw)
    return DatasetSpec(**base)


def make_samples(rng, factor, per_class, num_classes, frames=4, dim=3):
    out = []
    for c in range(num_classes):
        for j in range(per_class):
            w = rng.normal(size=(frames, dim)) + c
            w.setflags(write=False)
            out.append(GaitSample(subject=c, factor=factor, window=w, source_sequence=100 * c + j, window_start=j))
    return out


def brute_force_herding(points, k):
    """Textbook greedy: plain Python lists, no numpy, no shared code with the library."""
    remaining = list(range(len(points)))
    chosen = []
    for _ in range(k):
        dim = len(points[0])
        mean = [0.0] * dim
        for i in remaining:
            for d in range(dim):
                mean[d] += points[i][d]
        mean = [m / len(remaining) for m in mean]
        best, best_d = None, None
        for i in remaining:
            dist = 0.0
            for d in range(dim):
                diff = points[i][d] - mean[d]
                dist += diff * diff
            if best_d is None or dist < best_d:
                best, best_d = i, dist
        chosen.append(best)
        remaining.remove(best)
    return chosen


def model_loss_fn(model, x, labels, mask, old_logits, config=LossConfig()):
    """Closure for grad_check: composite loss through the full model."""

    def f(params):
        model.params = params
        params.zero_grad()
        _, logits, cache = model.forward(x, cache=True)
        value, dlogits = composite_loss(logits, labels, mask, old_logits, config)
        model.backward(dlogits, cache)
        return value, {k: v.copy() for k, v in params.grads.items()}

    return f


def is_smooth_point(model, x, margin=1e-4):
    """True when no ReLU input and no max-pool runner-up sits within ``margin`` of a kink or tie."""
    _, _, cache = model.forward(x, cache=True)
    flat, z1, h1, z2, sig, arg, T = cache
    if np.abs(z1).min() < margin or np.abs(z2).min() < margin:
        return False
    h2 = np.maximum(z2, 0).reshape(x.shape[0], T, -1)
    top2 = np.sort(h2, axis=1)[:, -2:, :]
    gap = top2[:, 1, :] - top2[:, 0, :]
    # a channel whose max is 0 has a zero gradient either way
    live = top2[:, 1, :] > 0
    return bool(np.all(gap[live] > margin))


def model_gradient_error(seed, dims=ModelDims(6, 8, 5, 4), batch=6, frames=5, config=LossConfig()):
    """Max relative gradient error of one random smooth batch; ``None`` if the draw was non-smooth."""
    rng = np.random.default_rng(seed)
    model = init_model(dims, seed=seed)
    x = rng.normal(size=(batch, frames, dims.frame_dim))
    if not is_smooth_point(model, x):
        return None
    labels = rng.integers(0, dims.num_classes, size=batch)
    mask = (rng.random(batch) < 0.5).astype(float)
    mask[0] = 1.0
    old = rng.normal(size=(batch, dims.num_classes))
    return grad_check(model_loss_fn(model, x, labels, mask, old, config), model.params)
