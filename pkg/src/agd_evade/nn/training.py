import logging

import numpy as np

from .. import codec
from ..errors import EmptyCorpus, TrainingDiverged, UnknownLabel
from . import graph
from .optim import AdamState, adam_step

log = logging.getLogger(__name__)

DEFAULT_EPOCHS = 5
DEFAULT_BATCH_SIZE = 128
DEFAULT_LR = 0.01


def train_arrays(model, x, targets, epochs=DEFAULT_EPOCHS, batch_size=DEFAULT_BATCH_SIZE,
                 learning_rate=DEFAULT_LR, seed=0, temperature=1.0):
    """Train a copy of ``model`` on pre-encoded inputs.

    ``targets`` holds one class index per row of ``x`` or an ``(n, classes)``
    matrix of soft labels. Shuffling is seeded per ``(seed, epoch)``.
    Returns ``(trained_model, per_epoch_mean_loss)``; ``model`` is not touched.

    With ``temperature`` T != 1 the output layer steps T times further than
    the rest of the network. Dividing the logits by T otherwise shrinks the
    head's ADAM step in logit/T space by the same factor, and recurrent
    models whose hidden state is bounded then stall at the class prior.
    """
    n = len(x)
    if n == 0:
        raise EmptyCorpus("no training samples")
    model = model.copy()
    targets = np.asarray(targets)
    state = AdamState(learning_rate=learning_rate)
    if temperature != 1.0:
        head = f"{len(model.layers) - 1}."
        state.lr_scale = {k: float(temperature) for k in model.params if k.startswith(head)}
    curve = []
    for epoch in range(epochs):
        order = np.random.default_rng([seed, epoch]).permutation(n)
        total = 0.0
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            acts, _ = graph.forward(model, x[idx], temperature)
            batch_loss = graph.loss(acts, targets[idx])
            if not np.isfinite(batch_loss):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}")
            grads, _ = graph.backward(model, acts, targets[idx])
            adam_step(model.params, grads, state)
            model.version += 1
            total += batch_loss * len(idx)
        curve.append(total / n)
        log.debug("epoch %d mean loss %.5f", epoch, curve[-1])
    return model, curve


def label_indices(model, labels):
    lookup = {name: i for i, name in enumerate(model.class_names)}
    try:
        return np.array([lookup[lab] for lab in labels], dtype=np.int64)
    except KeyError as exc:
        raise UnknownLabel(f"label {exc.args[0]!r} is not one of {model.class_names}") from None


def train(model, domains, labels, epochs=DEFAULT_EPOCHS, batch_size=DEFAULT_BATCH_SIZE,
          learning_rate=DEFAULT_LR, seed=0, temperature=1.0):
    """Train on domain names with class-name labels (see :func:`train_arrays`)."""
    if len(domains) == 0:
        raise EmptyCorpus("no training samples")
    y = label_indices(model, labels)
    x = codec.encode_batch(domains, model.input_rows, model.dtype)
    return train_arrays(model, x, y, epochs, batch_size, learning_rate, seed, temperature)
