"""Hot-loop kernels with a compiled backend and a numpy fallback.

The compiled module is used when it imports; set ``AGD_EVADE_PURE_PYTHON=1``
to force the fallback. The LSTM gate kernels always run on numpy: its
vectorised tanh beats a scalar libm loop by roughly an order of magnitude
(see ``benchmarks/bench_kernels.py``), so the compiled versions are kept
only for parity tests and benchmarking.
"""

import os

import numpy as np

from . import _pykernels

if os.environ.get("AGD_EVADE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.NAME
# kernels for which the numpy version is faster than the compiled one
_NUMPY_PREFERRED = ("lstm_pointwise_forward", "lstm_pointwise_backward")


def kernel_sources():
    """Backend actually serving each kernel."""
    names = ("lookup_indices", "onehot", "lstm_pointwise_forward", "lstm_pointwise_backward",
             "maxpool_half_forward", "maxpool_half_backward", "global_maxpool_forward",
             "global_maxpool_backward")
    return {n: "python" if n in _NUMPY_PREFERRED else BACKEND for n in names}


def available_backends():
    found = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        found["cython"] = _ckernels
    return found


def _c(x):
    return np.ascontiguousarray(x)


def lookup_indices(raw, table, rows):
    return _impl.lookup_indices(list(raw), table, rows)


def onehot(idx, ncols, dtype):
    return _impl.onehot(_c(idx), ncols, dtype)


def lstm_pointwise_forward(a, c_prev):
    return _pykernels.lstm_pointwise_forward(_c(a), _c(c_prev))


def lstm_pointwise_backward(dh, dc, gates, c_prev, tanh_c):
    return _pykernels.lstm_pointwise_backward(_c(dh), _c(dc), gates, c_prev, tanh_c)


def maxpool_half_forward(x):
    return _impl.maxpool_half_forward(_c(x))


def maxpool_half_backward(dy, arg, length):
    return _impl.maxpool_half_backward(_c(dy), arg, length)


def global_maxpool_forward(x):
    return _impl.global_maxpool_forward(_c(x))


def global_maxpool_backward(dy, arg, length):
    return _impl.global_maxpool_backward(_c(dy), arg, length)
