# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Loop order mirrors ``_kernels_py`` exactly."""
import numpy as np
from libc.math cimport sqrt


def maxpool_forward(h):
    cdef const double[:, :, ::1] hv = np.ascontiguousarray(h, dtype=np.float64)
    cdef Py_ssize_t B = hv.shape[0], T = hv.shape[1], E = hv.shape[2]
    pooled = np.empty((B, E))
    arg = np.zeros((B, E), dtype=np.intp)
    cdef double[:, ::1] pv = pooled
    cdef Py_ssize_t[:, ::1] av = arg
    cdef Py_ssize_t b, t, e
    cdef double v
    if T == 0:
        raise ValueError("attempt to get argmax of an empty sequence")
    for b in range(B):
        for e in range(E):
            pv[b, e] = hv[b, 0, e]
        for t in range(1, T):
            for e in range(E):
                v = hv[b, t, e]
                if v > pv[b, e]:
                    pv[b, e] = v
                    av[b, e] = t
    return pooled, arg


def maxpool_backward(grad, arg, Py_ssize_t frames):
    cdef const double[:, ::1] gv = np.ascontiguousarray(grad, dtype=np.float64)
    cdef const Py_ssize_t[:, ::1] av = np.ascontiguousarray(arg, dtype=np.intp)
    cdef Py_ssize_t B = gv.shape[0], E = gv.shape[1], b, e
    out = np.zeros((B, frames, E))
    cdef double[:, :, ::1] ov = out
    for b in range(B):
        for e in range(E):
            ov[b, av[b, e], e] = gv[b, e]
    return out


def sq_distances(x, centers):
    cdef const double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[:, ::1] cv = np.ascontiguousarray(centers, dtype=np.float64)
    cdef Py_ssize_t n = xv.shape[0], m = cv.shape[0], E = xv.shape[1], i, j, e
    out = np.empty((n, m))
    cdef double[:, ::1] ov = out
    cdef double acc, d
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for e in range(E):
                d = xv[i, e] - cv[j, e]
                acc = acc + d * d
            ov[i, j] = acc
    return out


def herding_order(sig, Py_ssize_t k):
    cdef const double[:, ::1] sv = np.ascontiguousarray(sig, dtype=np.float64)
    cdef Py_ssize_t n = sv.shape[0], E = sv.shape[1], i, j, e, best, count
    order = np.empty(k, dtype=np.intp)
    dists = np.empty(k)
    cdef Py_ssize_t[::1] ov = order
    cdef double[::1] dv = dists
    cdef unsigned char[::1] taken = np.zeros(n, dtype=np.uint8)
    cdef double[::1] mean = np.empty(E)
    cdef double acc, d, best_d
    for j in range(k):
        count = 0
        for e in range(E):
            mean[e] = 0.0
        for i in range(n):
            if taken[i]:
                continue
            count += 1
            for e in range(E):
                mean[e] = mean[e] + sv[i, e]
        for e in range(E):
            mean[e] = mean[e] / count
        best = -1
        best_d = 0.0
        for i in range(n):
            if taken[i]:
                continue
            acc = 0.0
            for e in range(E):
                d = sv[i, e] - mean[e]
                acc = acc + d * d
            if best < 0 or acc < best_d:
                best = i
                best_d = acc
        ov[j] = best
        dv[j] = sqrt(best_d)
        taken[best] = 1
    return order, dists


def maxpool_relu_backward(grad, arg, pooled, Py_ssize_t frames):
    cdef const double[:, ::1] gv = np.ascontiguousarray(grad, dtype=np.float64)
    cdef const Py_ssize_t[:, ::1] av = np.ascontiguousarray(arg, dtype=np.intp)
    cdef const double[:, ::1] pv = np.ascontiguousarray(pooled, dtype=np.float64)
    cdef Py_ssize_t B = gv.shape[0], E = gv.shape[1], b, e
    out = np.zeros((B, frames, E))
    cdef double[:, :, ::1] ov = out
    for b in range(B):
        for e in range(E):
            # Multiply (not branch) so signed zeros match the numpy path.
            ov[b, av[b, e], e] = gv[b, e] * (1.0 if pv[b, e] > 0 else 0.0)
    return out


def gather_windows(x, rows, frames, noise=None):
    cdef const double[:, :, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const Py_ssize_t[::1] rv = np.ascontiguousarray(rows, dtype=np.intp)
    cdef const Py_ssize_t[:, ::1] fv = np.ascontiguousarray(frames, dtype=np.intp)
    cdef Py_ssize_t B = fv.shape[0], T = fv.shape[1], D = xv.shape[2], b, t, d, r, f
    cdef Py_ssize_t n = xv.shape[0], L = xv.shape[1]
    cdef const double[:, :, ::1] nv
    cdef bint has_noise = noise is not None
    out = np.empty((B, T, D))
    cdef double[:, :, ::1] ov = out
    if has_noise:
        nv = np.ascontiguousarray(noise, dtype=np.float64)
    for b in range(B):
        r = rv[b]
        if r < 0 or r >= n:
            raise IndexError(f"row index {r} out of range")
        for t in range(T):
            f = fv[b, t]
            if f < 0 or f >= L:
                raise IndexError(f"frame index {f} out of range")
            if has_noise:
                for d in range(D):
                    ov[b, t, d] = xv[r, f, d] + nv[b, t, d]
            else:
                for d in range(D):
                    ov[b, t, d] = xv[r, f, d]
    return out
