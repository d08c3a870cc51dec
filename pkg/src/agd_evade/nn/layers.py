"""Layer kinds: parameter initialisation, shape inference, forward and backward.

Sequence tensors are ``(batch, length, channels)``; vector tensors are
``(batch, features)``. Every backward returns the gradient w.r.t. the layer
input together with a dict of parameter gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .. import _kernels
from ..errors import BadShape

KINDS = (
    "conv1d", "max_pool_half", "global_max_pool", "flatten", "dense",
    "lstm", "bilstm", "relu", "concat", "softmax_output",
)


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    width: int = 0
    filters: int = 0
    units: int = 0
    branches: tuple = field(default=())

    def __post_init__(self):
        if self.kind not in KINDS:
            raise BadShape(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv1d" and (self.width < 1 or self.filters < 1):
            raise BadShape("conv1d needs width >= 1 and filters >= 1")
        if self.kind in ("dense", "lstm", "bilstm", "softmax_output") and self.units < 1:
            raise BadShape(f"{self.kind} needs units >= 1")
        if self.kind == "concat" and not self.branches:
            raise BadShape("concat needs at least one branch")

    def to_dict(self):
        d = {"kind": self.kind}
        for key in ("width", "filters", "units"):
            if getattr(self, key):
                d[key] = getattr(self, key)
        if self.branches:
            d["branches"] = [[s.to_dict() for s in br] for br in self.branches]
        return d

    @classmethod
    def from_dict(cls, d):
        branches = tuple(tuple(cls.from_dict(s) for s in br) for br in d.get("branches", ()))
        return cls(d["kind"], d.get("width", 0), d.get("filters", 0), d.get("units", 0), branches)


# convenience constructors
def conv1d(width, filters):
    return LayerSpec("conv1d", width=width, filters=filters)


def dense(units):
    return LayerSpec("dense", units=units)


def lstm(units):
    return LayerSpec("lstm", units=units)


def bilstm(units):
    return LayerSpec("bilstm", units=units)


def softmax_output(classes):
    return LayerSpec("softmax_output", units=classes)


def concat(*branches):
    return LayerSpec("concat", branches=tuple(tuple(b) for b in branches))


RELU = LayerSpec("relu")
MAX_POOL_HALF = LayerSpec("max_pool_half")
GLOBAL_MAX_POOL = LayerSpec("global_max_pool")
FLATTEN = LayerSpec("flatten")


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def output_shape(spec: LayerSpec, shape: tuple) -> tuple:
    """Per-sample output shape; raises BadShape when shapes do not compose."""
    kind = spec.kind
    seq = len(shape) == 2
    if kind in ("conv1d", "max_pool_half", "global_max_pool", "flatten", "lstm", "bilstm") and not seq:
        raise BadShape(f"{kind} needs a sequence input, got shape {shape}")
    if kind in ("dense", "softmax_output") and seq:
        raise BadShape(f"{kind} needs a vector input, got shape {shape}")
    if kind == "conv1d":
        return (shape[0], spec.filters)
    if kind == "max_pool_half":
        if shape[0] < 2:
            raise BadShape("max_pool_half needs length >= 2")
        return (shape[0] // 2, shape[1])
    if kind == "global_max_pool":
        return (shape[1],)
    if kind == "flatten":
        return (shape[0] * shape[1],)
    if kind in ("dense", "softmax_output", "lstm"):
        return (spec.units,)
    if kind == "bilstm":
        return (2 * spec.units,)
    if kind == "relu":
        return shape
    # concat
    outs = []
    for branch in spec.branches:
        s = shape
        for sub in branch:
            s = output_shape(sub, s)
        outs.append(s)
    if len({o[:-1] for o in outs}) != 1:
        raise BadShape(f"concat branches disagree on leading shape: {outs}")
    return outs[0][:-1] + (sum(o[-1] for o in outs),)


def init_params(spec: LayerSpec, shape: tuple, rng, prefix: str, out: dict) -> None:
    kind = spec.kind
    if kind == "conv1d":
        w, cin, f = spec.width, shape[1], spec.filters
        out[prefix + "W"] = _glorot(rng, (w, cin, f), w * cin, w * f)
        out[prefix + "b"] = np.zeros(f)
    elif kind in ("dense", "softmax_output"):
        out[prefix + "W"] = _glorot(rng, (shape[0], spec.units), shape[0], spec.units)
        out[prefix + "b"] = np.zeros(spec.units)
    elif kind in ("lstm", "bilstm"):
        h, d = spec.units, shape[1]
        for tag in (("",) if kind == "lstm" else ("fw_", "bw_")):
            out[prefix + tag + "Wx"] = _glorot(rng, (d, 4 * h), d, 4 * h)
            out[prefix + tag + "Wh"] = _glorot(rng, (h, 4 * h), h, 4 * h)
            b = np.zeros(4 * h)
            b[h:2 * h] = 1.0  # forget gate starts open
            out[prefix + tag + "b"] = b
    elif kind == "concat":
        for k, branch in enumerate(spec.branches):
            s = shape
            for i, sub in enumerate(branch):
                init_params(sub, s, rng, f"{prefix}b{k}.{i}.", out)
                s = output_shape(sub, s)


# forward / backward -------------------------------------------------------

def _conv_forward(x, W, b):
    w = W.shape[0]
    left = (w - 1) // 2
    xp = np.pad(x, ((0, 0), (left, w - 1 - left), (0, 0)))
    # (B, L, C, w) -> (B, L, w, C)
    cols = sliding_window_view(xp, w, axis=1).transpose(0, 1, 3, 2)
    n, length = x.shape[:2]
    cols = cols.reshape(n * length, -1)
    y = cols @ W.reshape(-1, W.shape[2]) + b
    return y.reshape(n, length, -1), cols


def _conv_backward(dy, cols, W, x_shape):
    w, cin, f = W.shape
    n, length = x_shape[:2]
    left = (w - 1) // 2
    dy2 = dy.reshape(-1, f)
    dW = (cols.T @ dy2).reshape(W.shape)
    db = dy2.sum(axis=0)
    dcols = (dy2 @ W.reshape(-1, f).T).reshape(n, length, w, cin)
    dxp = np.zeros((n, length + w - 1, cin), dtype=dy.dtype)
    for k in range(w):
        dxp[:, k:k + length] += dcols[:, :, k]
    return dxp[:, left:left + length], {"W": dW, "b": db}


def _lstm_forward(x, Wx, Wh, b):
    n, length, _ = x.shape
    h = Wh.shape[0]
    xw = x @ Wx + b
    hid = np.zeros((n, h), dtype=x.dtype)
    c = np.zeros((n, h), dtype=x.dtype)
    steps = []
    for t in range(length):
        gates, c_new, tanh_c, h_new = _kernels.lstm_pointwise_forward(xw[:, t] + hid @ Wh, c)
        steps.append((hid, c, gates, tanh_c))
        hid, c = h_new, c_new
    return hid, steps


def _lstm_backward(dh_last, x, steps, Wx, Wh):
    n, length, _ = x.shape
    h = Wh.shape[0]
    dWh = np.zeros_like(Wh)
    dh = dh_last
    dc = np.zeros((n, h), dtype=dh_last.dtype)
    da_all = np.empty((n, length, 4 * h), dtype=dh_last.dtype)
    for t in range(length - 1, -1, -1):
        h_prev, c_prev, gates, tanh_c = steps[t]
        da, dc = _kernels.lstm_pointwise_backward(dh, dc, gates, c_prev, tanh_c)
        da_all[:, t] = da
        dWh += h_prev.T @ da
        dh = da @ Wh.T
    da2 = da_all.reshape(-1, 4 * h)
    dWx = x.reshape(-1, x.shape[2]).T @ da2
    db = da2.sum(axis=0)
    dx = (da2 @ Wx.T).reshape(x.shape)
    return dx, {"Wx": dWx, "Wh": dWh, "b": db}


def forward(spec: LayerSpec, params: dict, prefix: str, x):
    """Returns ``(y, cache)``."""
    kind = spec.kind
    if kind == "conv1d":
        y, cols = _conv_forward(x, params[prefix + "W"], params[prefix + "b"])
        return y, (x.shape, cols)
    if kind == "relu":
        mask = x > 0
        return x * mask, mask
    if kind == "max_pool_half":
        y, arg = _kernels.maxpool_half_forward(x)
        return y, (x.shape[1], arg)
    if kind == "global_max_pool":
        y, arg = _kernels.global_maxpool_forward(x)
        return y, (x.shape[1], arg)
    if kind == "flatten":
        return x.reshape(x.shape[0], -1), x.shape
    if kind in ("dense", "softmax_output"):
        return x @ params[prefix + "W"] + params[prefix + "b"], x
    if kind == "lstm":
        hid, steps = _lstm_forward(x, params[prefix + "Wx"], params[prefix + "Wh"], params[prefix + "b"])
        return hid, (x, steps)
    if kind == "bilstm":
        xr = x[:, ::-1]
        hf, sf = _lstm_forward(x, params[prefix + "fw_Wx"], params[prefix + "fw_Wh"], params[prefix + "fw_b"])
        hb, sb = _lstm_forward(xr, params[prefix + "bw_Wx"], params[prefix + "bw_Wh"], params[prefix + "bw_b"])
        return np.concatenate([hf, hb], axis=1), (x, xr, sf, sb)
    # concat
    outs, caches = [], []
    for k, branch in enumerate(spec.branches):
        y, bc = run(branch, params, f"{prefix}b{k}.", x)
        outs.append(y)
        caches.append(bc)
    return np.concatenate(outs, axis=-1), ([o.shape[-1] for o in outs], caches)


def backward(spec: LayerSpec, params: dict, prefix: str, cache, dy, grads: dict):
    """Accumulates parameter gradients into ``grads`` and returns the input gradient."""
    kind = spec.kind
    if kind == "conv1d":
        x_shape, cols = cache
        dx, g = _conv_backward(dy, cols, params[prefix + "W"], x_shape)
    elif kind == "relu":
        return dy * cache
    elif kind == "max_pool_half":
        length, arg = cache
        return _kernels.maxpool_half_backward(dy, arg, length)
    elif kind == "global_max_pool":
        length, arg = cache
        return _kernels.global_maxpool_backward(dy, arg, length)
    elif kind == "flatten":
        return dy.reshape(cache)
    elif kind in ("dense", "softmax_output"):
        x = cache
        W = params[prefix + "W"]
        g = {"W": x.T @ dy, "b": dy.sum(axis=0)}
        dx = dy @ W.T
    elif kind == "lstm":
        x, steps = cache
        dx, g = _lstm_backward(dy, x, steps, params[prefix + "Wx"], params[prefix + "Wh"])
    elif kind == "bilstm":
        x, xr, sf, sb = cache
        h = spec.units
        dxf, gf = _lstm_backward(np.ascontiguousarray(dy[:, :h]), x, sf,
                                 params[prefix + "fw_Wx"], params[prefix + "fw_Wh"])
        dxr, gb = _lstm_backward(np.ascontiguousarray(dy[:, h:]), xr, sb,
                                 params[prefix + "bw_Wx"], params[prefix + "bw_Wh"])
        dx = dxf + dxr[:, ::-1]
        g = {"fw_" + k: v for k, v in gf.items()}
        g.update({"bw_" + k: v for k, v in gb.items()})
    else:  # concat
        widths, caches = cache
        dx = None
        start = 0
        for k, (branch, bc, wdt) in enumerate(zip(spec.branches, caches, widths)):
            part = np.ascontiguousarray(dy[..., start:start + wdt])
            start += wdt
            d = run_backward(branch, params, f"{prefix}b{k}.", bc, part, grads)
            dx = d if dx is None else dx + d
        return dx
    for name, val in g.items():
        grads[prefix + name] = val
    return dx


def run(specs, params, prefix, x):
    caches = []
    for i, spec in enumerate(specs):
        x, c = forward(spec, params, f"{prefix}{i}.", x)
        caches.append(c)
    return x, caches


def run_backward(specs, params, prefix, caches, dy, grads):
    for i in range(len(specs) - 1, -1, -1):
        dy = backward(specs[i], params, f"{prefix}{i}.", caches[i], dy, grads)
    return dy
