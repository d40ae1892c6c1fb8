"""Numpy implementations of the hot kernels.

Every reduction here runs in a fixed sequential order (``cumsum``) so results
are bitwise identical to the compiled versions in ``_ckernels.pyx``.
"""
import numpy as np


def maxpool_forward(h):
    """Max over axis 1 of a (B, T, E) array. Returns (pooled, argmax); ties go to the lowest index."""
    h = np.ascontiguousarray(h, dtype=np.float64)
    arg = np.argmax(h, axis=1)
    pooled = np.take_along_axis(h, arg[:, None, :], axis=1)[:, 0, :]
    return np.ascontiguousarray(pooled), arg.astype(np.intp)


def maxpool_backward(grad, arg, frames):
    """Route each (B, E) gradient entry to the frame that won the max."""
    grad = np.asarray(grad, dtype=np.float64)
    b, e = grad.shape
    out = np.zeros((b, frames, e))
    np.put_along_axis(out, np.asarray(arg, dtype=np.intp)[:, None, :], grad[:, None, :], axis=1)
    return out


def sq_distances(x, centers):
    """Squared Euclidean distances between rows of x (n, E) and centers (m, E)."""
    x = np.asarray(x, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    diff = x[:, None, :] - centers[None, :, :]
    if diff.shape[2] == 0:
        return np.zeros(diff.shape[:2])
    return np.cumsum(diff * diff, axis=2)[:, :, -1]


def herding_order(sig, k):
    """Greedy herding; returns (indices, distances) of the k picks."""
    sig = np.ascontiguousarray(sig, dtype=np.float64)
    n = sig.shape[0]
    taken = np.zeros(n, dtype=bool)
    order = np.empty(k, dtype=np.intp)
    dists = np.empty(k)
    for j in range(k):
        idx = np.flatnonzero(~taken)
        rows = sig[idx]
        mean = np.cumsum(rows, axis=0)[-1] / idx.size
        diff = rows - mean
        d2 = np.cumsum(diff * diff, axis=1)[:, -1] if sig.shape[1] else np.zeros(idx.size)
        best = int(np.argmin(d2))
        order[j] = idx[best]
        dists[j] = np.sqrt(d2[best])
        taken[idx[best]] = True
    return order, dists


def maxpool_relu_backward(grad, arg, pooled, frames):
    """Max-pool backward fused with the preceding ReLU's mask (pooled > 0)."""
    grad = np.asarray(grad, dtype=np.float64)
    return maxpool_backward(grad * (np.asarray(pooled) > 0), arg, frames)


def gather_windows(x, rows, frames, noise=None):
    """out[b, t] = x[rows[b], frames[b, t]] (+ noise[b, t])."""
    out = np.asarray(x, dtype=np.float64)[np.asarray(rows, dtype=np.intp)[:, None], np.asarray(frames, dtype=np.intp)]
    if noise is not None:
        out = out + noise
    return out
