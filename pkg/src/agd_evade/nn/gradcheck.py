"""Central finite-difference oracle for model gradients.

Only uses forward passes, so it stays independent of the backward code it
checks. Run it on float64 models; float32 rounding swamps small steps.
"""

import numpy as np

from . import graph


def relative_error(analytic, numeric, floor=1e-6):
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), floor)


def _loss_at(model, x, targets, temperature):
    acts, _ = graph.forward(model, x, temperature)
    return graph.loss(acts, targets)


def numeric_param_grad(model, x, targets, name, index, eps=1e-5, temperature=1.0):
    p = model.params[name]
    old = p[index]
    p[index] = old + eps
    up = _loss_at(model, x, targets, temperature)
    p[index] = old - eps
    down = _loss_at(model, x, targets, temperature)
    p[index] = old
    return (up - down) / (2 * eps)


def numeric_input_grad(model, x, targets, index, eps=1e-5, temperature=1.0):
    x = np.array(x, dtype=model.dtype)
    old = x[index]
    x[index] = old + eps
    up = _loss_at(model, x, targets, temperature)
    x[index] = old - eps
    down = _loss_at(model, x, targets, temperature)
    return (up - down) / (2 * eps)


def check_model(model, x, targets, rng, samples_per_param=3, input_samples=10,
                eps=1e-5, temperature=1.0):
    """Worst relative error over sampled parameter and input coordinates."""
    acts, _ = graph.forward(model, x, temperature)
    grads, dx = graph.backward(model, acts, targets)
    worst = 0.0
    for name, g in grads.items():
        for _ in range(samples_per_param):
            index = tuple(int(rng.integers(s)) for s in g.shape)
            num = numeric_param_grad(model, x, targets, name, index, eps, temperature)
            worst = max(worst, float(relative_error(g[index], num)))
    for _ in range(input_samples):
        index = tuple(int(rng.integers(s)) for s in dx.shape)
        num = numeric_input_grad(model, x, targets, index, eps, temperature)
        worst = max(worst, float(relative_error(dx[index], num)))
    return worst
