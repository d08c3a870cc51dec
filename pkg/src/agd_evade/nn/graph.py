"""Model graph: a fixed layer sequence ending in a softmax output over classes."""

from __future__ import annotations

import copy
import itertools
from dataclasses import dataclass, field

import numpy as np

from .. import codec
from ..errors import BadShape, ShapeMismatch, StaleActivations
from . import layers as L
from .functional import log_softmax, softmax_with_temperature, target_matrix

_ids = itertools.count()


@dataclass(eq=False)
class ModelGraph:
    layers: tuple
    params: dict
    class_names: tuple
    input_rows: int
    input_cols: int = codec.NUM_SYMBOLS
    metadata: dict = field(default_factory=dict)
    # bumped on every parameter update so stale activations can be detected
    version: int = field(default=0, compare=False)
    uid: int = field(default_factory=lambda: next(_ids), compare=False, repr=False)

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def num_params(self):
        return int(sum(p.size for p in self.params.values()))

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def copy(self):
        return ModelGraph(
            self.layers,
            {k: v.copy() for k, v in self.params.items()},
            self.class_names,
            self.input_rows,
            self.input_cols,
            copy.deepcopy(self.metadata),
        )

    def astype(self, dtype):
        m = self.copy()
        m.params = {k: v.astype(dtype) for k, v in m.params.items()}
        return m

    def class_index(self, name):
        return self.class_names.index(name)


def build(layers, class_names, input_rows, seed, dtype=np.float32, metadata=None):
    """Create a model with seeded Glorot-uniform weights and zero biases."""
    layers = tuple(layers)
    class_names = tuple(class_names)
    if len(class_names) < 2 or class_names[0] != "benign":
        raise BadShape("class_names needs >= 2 entries with 'benign' first")
    if len(set(class_names)) != len(class_names):
        raise BadShape("duplicate class names")
    if not 1 <= input_rows <= codec.MAX_LENGTH:
        raise BadShape(f"input_rows must be in 1..{codec.MAX_LENGTH}")
    if not layers or layers[-1].kind != "softmax_output":
        raise BadShape("the last layer must be softmax_output")
    if layers[-1].units != len(class_names):
        raise BadShape("softmax_output width must equal the number of classes")
    shape = (input_rows, codec.NUM_SYMBOLS)
    rng = np.random.default_rng(seed)
    params = {}
    for i, spec in enumerate(layers):
        L.init_params(spec, shape, rng, f"{i}.", params)
        shape = L.output_shape(spec, shape)
    params = {k: v.astype(dtype) for k, v in params.items()}
    return ModelGraph(layers, params, class_names, input_rows, metadata=dict(metadata or {}))


@dataclass
class Activations:
    x: np.ndarray
    caches: list
    logits: np.ndarray
    probs: np.ndarray
    temperature: float
    model_uid: int
    model_version: int


def as_batch(model: ModelGraph, batch) -> np.ndarray:
    """Pad a batch of one-hot matrices to ``(n, input_rows, 39)``."""
    dtype = model.dtype
    if isinstance(batch, np.ndarray) and batch.ndim == 3:
        if batch.shape[1:] != (model.input_rows, model.input_cols):
            raise ShapeMismatch(
                f"batch shape {batch.shape[1:]} != {(model.input_rows, model.input_cols)}")
        return batch.astype(dtype, copy=False)
    mats = [np.asarray(m) for m in batch]
    out = np.zeros((len(mats), model.input_rows, model.input_cols), dtype=dtype)
    for b, m in enumerate(mats):
        if m.ndim != 2 or m.shape[1] != model.input_cols or m.shape[0] > model.input_rows:
            raise ShapeMismatch(f"matrix of shape {m.shape} does not fit "
                                f"{(model.input_rows, model.input_cols)}")
        out[b, :m.shape[0]] = m
    return out


def forward(model: ModelGraph, batch, temperature=1.0):
    x = as_batch(model, batch)
    logits, caches = L.run(model.layers, model.params, "", x)
    probs = softmax_with_temperature(logits, temperature)
    acts = Activations(x, caches, logits, probs, temperature, model.uid, model.version)
    return acts, probs


def loss(acts: Activations, targets) -> float:
    """Mean cross-entropy of the temperature softmax against ``targets``."""
    n, c = acts.logits.shape
    y = target_matrix(targets, n, c)
    return float(-(y * log_softmax(acts.logits.astype(np.float64), acts.temperature)).sum() / n)


def backward(model: ModelGraph, acts: Activations, targets):
    """Exact gradients of :func:`loss` w.r.t. every parameter and input cell.

    ``targets`` is a class index shared by the batch, one index per sample,
    or an ``(n, classes)`` matrix of target distributions.
    """
    if acts.model_uid != model.uid or acts.model_version != model.version:
        raise StaleActivations("activations do not belong to the current model parameters")
    n, c = acts.probs.shape
    y = target_matrix(targets, n, c, acts.probs.dtype)
    dlogits = ((acts.probs - y) / (n * acts.temperature)).astype(model.dtype)
    grads = {}
    dx = L.run_backward(model.layers, model.params, "", acts.caches, dlogits, grads)
    return {k: grads[k] for k in model.params}, dx


def predict_proba(model: ModelGraph, domains, batch_size=512, temperature=1.0):
    out = []
    for start in range(0, len(domains), batch_size):
        x = codec.encode_batch(domains[start:start + batch_size], model.input_rows, model.dtype)
        out.append(forward(model, x, temperature)[1])
    if not out:
        return np.zeros((0, model.num_classes))
    return np.concatenate(out)


def predict(model: ModelGraph, domains, batch_size=512):
    return predict_proba(model, domains, batch_size).argmax(axis=1)
