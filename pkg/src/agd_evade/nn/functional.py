import numpy as np

from ..errors import BadIndex, NonPositiveTemperature

PROB_FLOOR = 1e-7


def softmax_with_temperature(logits, T=1.0):
    """Row-wise ``exp(z_i / T) / sum_l exp(z_l / T)`` with max subtraction."""
    if not T > 0:
        raise NonPositiveTemperature(f"temperature must be positive, got {T}")
    z = np.asarray(logits)
    if not np.issubdtype(z.dtype, np.floating):
        z = z.astype(np.float64)
    if T != 1.0:
        z = z / T
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits):
    return softmax_with_temperature(logits, 1.0)


def log_softmax(logits, T=1.0):
    z = np.asarray(logits) / T
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def targeted_loss(probs, target_class: int) -> float:
    """Mean cross-entropy of ``probs`` against a one-hot ``target_class``.

    Probabilities are floored at 1e-7 before the log so the loss stays finite.
    """
    p = np.atleast_2d(np.asarray(probs, dtype=np.float64))
    if not 0 <= target_class < p.shape[1]:
        raise BadIndex(f"class {target_class} outside 0..{p.shape[1] - 1}")
    return float(np.mean(-np.log(np.maximum(p[:, target_class], PROB_FLOOR))))


def target_matrix(targets, n: int, num_classes: int, dtype=np.float64):
    """Normalise int / int-array / distribution targets into an ``(n, C)`` matrix."""
    t = np.asarray(targets)
    if t.ndim == 2:
        if t.shape != (n, num_classes):
            raise BadIndex(f"soft targets of shape {t.shape}, expected {(n, num_classes)}")
        return t.astype(dtype, copy=False)
    idx = np.broadcast_to(t.astype(np.int64), (n,))
    if idx.size and (idx.min() < 0 or idx.max() >= num_classes):
        raise BadIndex(f"target index outside 0..{num_classes - 1}")
    out = np.zeros((n, num_classes), dtype=dtype)
    out[np.arange(n), idx] = 1
    return out
