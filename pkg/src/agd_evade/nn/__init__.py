"""Compact differentiable core: layers, exact backward passes, ADAM, serialization."""

from .functional import softmax, softmax_with_temperature, targeted_loss
from .graph import ModelGraph, backward, build, forward, loss, predict, predict_proba
from .layers import LayerSpec
from .optim import AdamState, adam_step
from .serialize import load_model, save_model
from .training import train, train_arrays

__all__ = [
    "AdamState", "LayerSpec", "ModelGraph", "adam_step", "backward", "build", "forward",
    "load_model", "loss", "predict", "predict_proba", "save_model", "softmax",
    "softmax_with_temperature", "targeted_loss", "train", "train_arrays",
]
