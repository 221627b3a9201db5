# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense kernels with a fixed accumulation order.

Every reduction walks its summands left to right (ascending index), so
outputs are bit-identical across runs and machines for identical inputs.
Inputs are assumed validated (C-contiguous float64 of the right rank); the
Python wrapper in kernels/__init__.py performs the shape checks.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs

cnp.import_array()


def matmul(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t m = a.shape[0]
    cdef Py_ssize_t k = a.shape[1]
    cdef Py_ssize_t n = b.shape[1]
    out = np.zeros((m, n), dtype=np.float64)
    cdef double[:, ::1] c = out
    cdef Py_ssize_t i, p, j
    cdef double aip
    # i-p-j loop order: contributions to c[i, j] arrive with p ascending,
    # i.e. left-to-right accumulation, while the inner j loop vectorizes.
    for i in range(m):
        for p in range(k):
            aip = a[i, p]
            for j in range(n):
                c[i, j] += aip * b[p, j]
    return out


def relu(x):
    flat_in = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    out = np.empty_like(flat_in)
    cdef double[::1] xi = flat_in
    cdef double[::1] yo = out
    cdef Py_ssize_t i, n = xi.shape[0]
    for i in range(n):
        yo[i] = xi[i] if xi[i] > 0.0 else 0.0
    return out.reshape(np.shape(x))


cdef inline double _sigmoid(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def sigmoid(double x):
    return _sigmoid(x)


def sigmoid_array(x):
    flat_in = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    out = np.empty_like(flat_in)
    cdef double[::1] xi = flat_in
    cdef double[::1] yo = out
    cdef Py_ssize_t i, n = xi.shape[0]
    for i in range(n):
        yo[i] = _sigmoid(xi[i])
    return out.reshape(np.shape(x))


def conv2d_valid(double[:, :, ::1] x, double[:, :, :, ::1] kernels):
    cdef Py_ssize_t cin = x.shape[0]
    cdef Py_ssize_t h = x.shape[1]
    cdef Py_ssize_t w = x.shape[2]
    cdef Py_ssize_t cout = kernels.shape[0]
    cdef Py_ssize_t k = kernels.shape[2]
    cdef Py_ssize_t ho = h - k + 1
    cdef Py_ssize_t wo = w - k + 1
    out = np.zeros((cout, ho, wo), dtype=np.float64)
    cdef double[:, :, ::1] y = out
    cdef Py_ssize_t o, c, di, dj, r, s
    cdef double kv
    # Per output element, contributions accumulate in (c, di, dj) ascending
    # order, fixed regardless of grid size.
    for o in range(cout):
        for c in range(cin):
            for di in range(k):
                for dj in range(k):
                    kv = kernels[o, c, di, dj]
                    for r in range(ho):
                        for s in range(wo):
                            y[o, r, s] += kv * x[c, r + di, s + dj]
    return out


def conv2d_grad_kernels(double[:, :, ::1] x, double[:, :, ::1] grad_out, Py_ssize_t k):
    cdef Py_ssize_t cin = x.shape[0]
    cdef Py_ssize_t cout = grad_out.shape[0]
    cdef Py_ssize_t ho = grad_out.shape[1]
    cdef Py_ssize_t wo = grad_out.shape[2]
    out = np.zeros((cout, cin, k, k), dtype=np.float64)
    cdef double[:, :, :, ::1] g = out
    cdef Py_ssize_t o, c, di, dj, r, s
    cdef double acc
    for o in range(cout):
        for c in range(cin):
            for di in range(k):
                for dj in range(k):
                    acc = 0.0
                    for r in range(ho):
                        for s in range(wo):
                            acc += x[c, r + di, s + dj] * grad_out[o, r, s]
                    g[o, c, di, dj] = acc
    return out


def conv2d_grad_input(double[:, :, :, ::1] kernels, double[:, :, ::1] grad_out,
                      Py_ssize_t height, Py_ssize_t width):
    cdef Py_ssize_t cout = kernels.shape[0]
    cdef Py_ssize_t cin = kernels.shape[1]
    cdef Py_ssize_t k = kernels.shape[2]
    cdef Py_ssize_t ho = grad_out.shape[1]
    cdef Py_ssize_t wo = grad_out.shape[2]
    out = np.zeros((cin, height, width), dtype=np.float64)
    cdef double[:, :, ::1] g = out
    cdef Py_ssize_t o, c, di, dj, r, s
    cdef double kv
    for o in range(cout):
        for c in range(cin):
            for di in range(k):
                for dj in range(k):
                    kv = kernels[o, c, di, dj]
                    for r in range(ho):
                        for s in range(wo):
                            g[c, r + di, s + dj] += kv * grad_out[o, r, s]
    return out
