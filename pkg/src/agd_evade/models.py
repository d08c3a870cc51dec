"""Architecture builders for the substitute and the four target classifiers."""

import numpy as np

from .errors import BadShape, UnknownArchitecture
from .nn import graph
from .nn.layers import (FLATTEN, GLOBAL_MAX_POOL, MAX_POOL_HALF, RELU, bilstm, concat, conv1d,
                        dense, lstm, softmax_output)

DEFAULT_INPUT_ROWS = 32

SUBSTITUTE = "substitute_cnn"
TARGETS = ("cnn_parallel_invincea", "lstm_endgame", "bilstm_cmu", "cnn_lstm_mit")
ARCHITECTURES = (SUBSTITUTE,) + TARGETS


def _check(num_classes, input_rows):
    if num_classes < 2:
        raise BadShape("need at least two classes")
    if not 2 <= input_rows <= 65:
        raise BadShape("input_rows must be in 2..65")


def class_list(num_classes_or_names):
    if isinstance(num_classes_or_names, int):
        return ("benign",) + tuple(f"class_{i}" for i in range(1, num_classes_or_names))
    return tuple(num_classes_or_names)


def substitute_layers(num_classes):
    return (
        concat(*[(conv1d(w, 32), RELU) for w in (2, 3, 4, 5)]),
        MAX_POOL_HALF,
        FLATTEN,
        dense(128), RELU,
        dense(64), RELU,
        softmax_output(num_classes),
    )


def target_layers(arch, num_classes):
    if arch == "lstm_endgame":
        return (lstm(64), softmax_output(num_classes))
    if arch == "bilstm_cmu":
        return (bilstm(48), softmax_output(num_classes))
    if arch == "cnn_parallel_invincea":
        return (
            concat(*[(conv1d(w, 48), RELU, GLOBAL_MAX_POOL) for w in (2, 3, 4, 5)]),
            dense(64), RELU,
            dense(64), RELU,
            softmax_output(num_classes),
        )
    if arch == "cnn_lstm_mit":
        return (
            conv1d(3, 48), RELU,
            conv1d(3, 48), RELU,
            lstm(48),
            softmax_output(num_classes),
        )
    raise UnknownArchitecture(f"{arch!r} is not a target architecture; choose from {TARGETS}")


def build_substitute(classes, input_rows=DEFAULT_INPUT_ROWS, seed=0, dtype=np.float32):
    """Parallel convolutions (widths 2-5, 32 filters), halving max-pool, 128/64 dense."""
    names = class_list(classes)
    _check(len(names), input_rows)
    return graph.build(substitute_layers(len(names)), names, input_rows, seed, dtype,
                       metadata={"architecture": SUBSTITUTE})


def build_target(arch, classes, input_rows=DEFAULT_INPUT_ROWS, seed=0, dtype=np.float32):
    names = class_list(classes)
    _check(len(names), input_rows)
    layers = target_layers(arch, len(names))
    return graph.build(layers, names, input_rows, seed, dtype, metadata={"architecture": arch})


def build(arch, classes, input_rows=DEFAULT_INPUT_ROWS, seed=0, dtype=np.float32):
    if arch == SUBSTITUTE:
        return build_substitute(classes, input_rows, seed, dtype)
    if arch not in TARGETS:
        raise UnknownArchitecture(f"unknown architecture {arch!r}; choose from {ARCHITECTURES}")
    return build_target(arch, classes, input_rows, seed, dtype)
