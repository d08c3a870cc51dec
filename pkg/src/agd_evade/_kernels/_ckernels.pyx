# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport expf, tanh
from cython cimport floating

cnp.import_array()

NAME = "cython"


def lookup_indices(list raw, const signed char[::1] table, Py_ssize_t rows):
    cdef Py_ssize_t n = len(raw), b, t, m
    cdef const unsigned char[::1] s
    cdef signed char code
    out = np.full((n, rows), -1, dtype=np.int64)
    cdef long long[:, ::1] o = out
    for b in range(n):
        s = raw[b]
        m = s.shape[0]
        for t in range(m):
            code = table[s[t]]
            o[b, t] = code if code >= 0 else -2
    return out


def onehot(const long long[:, ::1] idx, Py_ssize_t ncols, dtype):
    cdef Py_ssize_t n = idx.shape[0], rows = idx.shape[1], b, t
    out = np.zeros((n, rows, ncols), dtype=dtype)
    if dtype == np.float32:
        _fill_onehot[float](idx, out)
    elif dtype == np.float64:
        _fill_onehot[double](idx, out)
    else:
        flat = out.reshape(-1, ncols)
        src = np.asarray(idx).reshape(-1)
        mask = src >= 0
        flat[np.flatnonzero(mask), src[mask]] = 1
    return out


cdef void _fill_onehot(const long long[:, ::1] idx, floating[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t b, t
    for b in range(idx.shape[0]):
        for t in range(idx.shape[1]):
            if idx[b, t] >= 0:
                out[b, t, idx[b, t]] = 1


cdef inline floating _tanh(floating x) noexcept nogil:
    # single precision goes through expf, which is several times faster than
    # tanhf/expm1f in glibc; the absolute error stays below 1e-7
    cdef float e
    if floating is float:
        if x > 15:
            return 1
        if x < -15:
            return -1
        e = expf(2 * x)
        return (e - 1) / (e + 1)
    else:
        return tanh(x)


cdef inline floating _sigmoid(floating x) noexcept nogil:
    return 0.5 * (1.0 + _tanh(0.5 * x))


def lstm_pointwise_forward(floating[:, ::1] a, floating[:, ::1] c_prev):
    cdef Py_ssize_t n = c_prev.shape[0], h = c_prev.shape[1], b, k
    dt = np.float32 if floating is float else np.float64
    gates_arr = np.empty((n, 4 * h), dtype=dt)
    c_arr = np.empty((n, h), dtype=dt)
    tc_arr = np.empty((n, h), dtype=dt)
    h_arr = np.empty((n, h), dtype=dt)
    cdef floating[:, ::1] gates = gates_arr
    cdef floating[:, ::1] c = c_arr
    cdef floating[:, ::1] tc = tc_arr
    cdef floating[:, ::1] hid = h_arr
    cdef floating i, f, g, o
    with nogil:
        for b in range(n):
            for k in range(h):
                i = _sigmoid(a[b, k])
                f = _sigmoid(a[b, h + k])
                g = _tanh(a[b, 2 * h + k])
                o = _sigmoid(a[b, 3 * h + k])
                gates[b, k] = i
                gates[b, h + k] = f
                gates[b, 2 * h + k] = g
                gates[b, 3 * h + k] = o
                c[b, k] = f * c_prev[b, k] + i * g
                tc[b, k] = _tanh(c[b, k])
                hid[b, k] = o * tc[b, k]
    return gates_arr, c_arr, tc_arr, h_arr


def lstm_pointwise_backward(floating[:, ::1] dh, floating[:, ::1] dc,
                            floating[:, ::1] gates, floating[:, ::1] c_prev,
                            floating[:, ::1] tanh_c):
    cdef Py_ssize_t n = c_prev.shape[0], h = c_prev.shape[1], b, k
    dt = np.float32 if floating is float else np.float64
    da_arr = np.empty((n, 4 * h), dtype=dt)
    dcp_arr = np.empty((n, h), dtype=dt)
    cdef floating[:, ::1] da = da_arr
    cdef floating[:, ::1] dcp = dcp_arr
    cdef floating i, f, g, o, t, d
    with nogil:
        for b in range(n):
            for k in range(h):
                i = gates[b, k]
                f = gates[b, h + k]
                g = gates[b, 2 * h + k]
                o = gates[b, 3 * h + k]
                t = tanh_c[b, k]
                d = dc[b, k] + dh[b, k] * o * (1.0 - t * t)
                da[b, k] = d * g * i * (1.0 - i)
                da[b, h + k] = d * c_prev[b, k] * f * (1.0 - f)
                da[b, 2 * h + k] = d * i * (1.0 - g * g)
                da[b, 3 * h + k] = dh[b, k] * t * o * (1.0 - o)
                dcp[b, k] = d * f
    return da_arr, dcp_arr


def maxpool_half_forward(floating[:, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], half = x.shape[1] // 2, c = x.shape[2], b, t, k
    dt = np.float32 if floating is float else np.float64
    y_arr = np.empty((n, half, c), dtype=dt)
    arg_arr = np.empty((n, half, c), dtype=np.int8)
    cdef floating[:, :, ::1] y = y_arr
    cdef signed char[:, :, ::1] arg = arg_arr
    with nogil:
        for b in range(n):
            for t in range(half):
                for k in range(c):
                    if x[b, 2 * t + 1, k] > x[b, 2 * t, k]:
                        y[b, t, k] = x[b, 2 * t + 1, k]
                        arg[b, t, k] = 1
                    else:
                        y[b, t, k] = x[b, 2 * t, k]
                        arg[b, t, k] = 0
    return y_arr, arg_arr


def maxpool_half_backward(floating[:, :, ::1] dy, const signed char[:, :, ::1] arg, Py_ssize_t length):
    cdef Py_ssize_t n = dy.shape[0], half = dy.shape[1], c = dy.shape[2], b, t, k
    dt = np.float32 if floating is float else np.float64
    dx_arr = np.zeros((n, length, c), dtype=dt)
    cdef floating[:, :, ::1] dx = dx_arr
    with nogil:
        for b in range(n):
            for t in range(half):
                for k in range(c):
                    dx[b, 2 * t + arg[b, t, k], k] = dy[b, t, k]
    return dx_arr


def global_maxpool_forward(floating[:, :, ::1] x):
    cdef Py_ssize_t n = x.shape[0], length = x.shape[1], c = x.shape[2], b, t, k
    dt = np.float32 if floating is float else np.float64
    y_arr = np.empty((n, c), dtype=dt)
    arg_arr = np.zeros((n, c), dtype=np.int64)
    cdef floating[:, ::1] y = y_arr
    cdef long long[:, ::1] arg = arg_arr
    with nogil:
        for b in range(n):
            for k in range(c):
                y[b, k] = x[b, 0, k]
            for t in range(1, length):
                for k in range(c):
                    if x[b, t, k] > y[b, k]:
                        y[b, k] = x[b, t, k]
                        arg[b, k] = t
    return y_arr, arg_arr


def global_maxpool_backward(floating[:, ::1] dy, const long long[:, ::1] arg, Py_ssize_t length):
    cdef Py_ssize_t n = dy.shape[0], c = dy.shape[1], b, k
    dt = np.float32 if floating is float else np.float64
    dx_arr = np.zeros((n, length, c), dtype=dt)
    cdef floating[:, :, ::1] dx = dx_arr
    with nogil:
        for b in range(n):
            for k in range(c):
                dx[b, arg[b, k], k] = dy[b, k]
    return dx_arr
