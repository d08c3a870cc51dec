"""Pure numpy implementations of the hot kernels.

These define the reference semantics; the compiled module must agree with
them up to floating point rounding.
"""

import numpy as np

NAME = "python"


def lookup_indices(raw, table, rows):
    """Map byte strings to alphabet ordinals, padded with -1; -2 marks bad bytes."""
    out = np.full((len(raw), rows), -1, dtype=np.int64)
    for b, s in enumerate(raw):
        codes = table[np.frombuffer(s, dtype=np.uint8)].astype(np.int64)
        codes[codes < 0] = -2
        out[b, :len(s)] = codes
    return out


def onehot(idx, ncols, dtype):
    out = np.zeros(idx.shape + (ncols,), dtype=dtype)
    mask = idx >= 0
    b, t = np.nonzero(mask)
    out[b, t, idx[mask]] = 1
    return out


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def lstm_pointwise_forward(a, c_prev):
    """Gate activations (i, f, g, o order) and the new cell/hidden state."""
    h = c_prev.shape[1]
    gates = np.empty_like(a)
    gates[:, :2 * h] = _sigmoid(a[:, :2 * h])
    gates[:, 2 * h:3 * h] = np.tanh(a[:, 2 * h:3 * h])
    gates[:, 3 * h:] = _sigmoid(a[:, 3 * h:])
    i, f, g, o = gates[:, :h], gates[:, h:2 * h], gates[:, 2 * h:3 * h], gates[:, 3 * h:]
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    return gates, c, tanh_c, o * tanh_c


def lstm_pointwise_backward(dh, dc, gates, c_prev, tanh_c):
    h = c_prev.shape[1]
    i, f, g, o = gates[:, :h], gates[:, h:2 * h], gates[:, 2 * h:3 * h], gates[:, 3 * h:]
    dc = dc + dh * o * (1.0 - tanh_c * tanh_c)
    da = np.empty_like(gates)
    da[:, :h] = dc * g * i * (1.0 - i)
    da[:, h:2 * h] = dc * c_prev * f * (1.0 - f)
    da[:, 2 * h:3 * h] = dc * i * (1.0 - g * g)
    da[:, 3 * h:] = dh * tanh_c * o * (1.0 - o)
    return da, dc * f


def maxpool_half_forward(x):
    n, length, c = x.shape
    half = length // 2
    pairs = x[:, :2 * half].reshape(n, half, 2, c)
    arg = (pairs[:, :, 1] > pairs[:, :, 0]).astype(np.int8)
    y = np.where(arg.astype(bool), pairs[:, :, 1], pairs[:, :, 0])
    return y, arg


def maxpool_half_backward(dy, arg, length):
    n, half, c = dy.shape
    dx = np.zeros((n, length, c), dtype=dy.dtype)
    sel = arg.astype(bool)
    dx[:, 0:2 * half:2] = np.where(sel, 0, dy)
    dx[:, 1:2 * half:2] = np.where(sel, dy, 0)
    return dx


def global_maxpool_forward(x):
    arg = x.argmax(axis=1)
    y = np.take_along_axis(x, arg[:, None, :], axis=1)[:, 0]
    return y, arg


def global_maxpool_backward(dy, arg, length):
    n, c = dy.shape
    dx = np.zeros((n, length, c), dtype=dy.dtype)
    np.put_along_axis(dx, arg[:, None, :], dy[:, None, :], axis=1)
    return dx
