"""Adversarial re-training and defensive distillation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import attack, codec, models
from .errors import ConfigError, EmptyCorpus, FamilyTooSmall, NonPositiveTemperature
from .nn import graph, training

DEFAULT_PER_FAMILY = 100
DEFAULT_EXTRA_EPOCHS = 2
DEFAULT_TEMPERATURE = 10.0
# temperature training of the LSTM targets oscillates at the plain-training rate
DEFAULT_DISTILL_LR = 0.003


def craft_adversarial_samples(substitute, domains, labels, families, per_family, seed):
    """Draw ``per_family`` names from each family and run MaskDGA on them.

    Returns ``(adversarial_domains, family_labels)``.
    """
    rng = np.random.default_rng(seed)
    labels = np.asarray(labels)
    picked, picked_labels = [], []
    for family in families:
        pool = np.flatnonzero(labels == family)
        if len(pool) < per_family:
            raise FamilyTooSmall(f"{family}: {len(pool)} names available, {per_family} requested")
        chosen = np.sort(rng.choice(pool, per_family, replace=False))
        picked.extend(domains[i] for i in chosen)
        picked_labels.extend([family] * per_family)
    report = attack.attack_batch(substitute, picked, "maskdga")
    out, out_labels = [], []
    for res, lab in zip(report.results, picked_labels):
        if res.adversarial is not None:
            out.append(res.adversarial)
            out_labels.append(lab)
    return out, out_labels


def adversarial_retrain(target, domains, labels, substitute, per_family=DEFAULT_PER_FAMILY,
                        extra_epochs=DEFAULT_EXTRA_EPOCHS, seed=0,
                        batch_size=training.DEFAULT_BATCH_SIZE,
                        learning_rate=training.DEFAULT_LR):
    """Continue training ``target`` on its data plus MaskDGA samples labelled
    with their true family. Returns a new model; ``target`` is not modified."""
    if per_family < 0:
        raise ConfigError("per_family must be >= 0")
    families = [c for c in target.class_names if c != "benign"]
    adv, adv_labels = [], []
    if per_family:
        adv, adv_labels = craft_adversarial_samples(substitute, domains, labels, families,
                                                    per_family, seed)
    hardened, curve = training.train(target, list(domains) + adv, list(labels) + adv_labels,
                                     epochs=extra_epochs, batch_size=batch_size,
                                     learning_rate=learning_rate, seed=seed)
    hardened.metadata["defense"] = {"method": "retrain", "per_family": per_family,
                                    "extra_epochs": extra_epochs, "adversarial_samples": len(adv)}
    return hardened, curve


@dataclass(frozen=True)
class DistillationConfig:
    temperature: float = DEFAULT_TEMPERATURE
    teacher_arch: str = "cnn_parallel_invincea"
    student_arch: str = "cnn_parallel_invincea"
    epochs: int = training.DEFAULT_EPOCHS
    batch_size: int = training.DEFAULT_BATCH_SIZE
    learning_rate: float = DEFAULT_DISTILL_LR

    def __post_init__(self):
        if not self.temperature > 0:
            raise NonPositiveTemperature(f"temperature must be positive, got {self.temperature}")


def distill(config: DistillationConfig, domains, labels, classes, seed=0,
            input_rows=models.DEFAULT_INPUT_ROWS):
    """Teacher on hard labels at temperature T, student on the teacher's
    temperature-T distributions at the same T.

    Both returned models predict at T=1. Returns ``(teacher, student, curves)``.
    """
    if not len(domains):
        raise EmptyCorpus("no training samples for distillation")
    T = float(config.temperature)
    x = codec.encode_batch(domains, input_rows)
    teacher = models.build(config.teacher_arch, classes, input_rows, seed)
    y = training.label_indices(teacher, labels)
    teacher, teacher_curve = training.train_arrays(
        teacher, x, y, config.epochs, config.batch_size, config.learning_rate, seed, temperature=T)
    soft = soft_labels(teacher, x, T)
    student = models.build(config.student_arch, classes, input_rows, seed + 1)
    student, student_curve = training.train_arrays(
        student, x, soft, config.epochs, config.batch_size, config.learning_rate, seed + 1,
        temperature=T)
    tag = {"method": "distill", "temperature": T}
    teacher.metadata["defense"] = dict(tag, role="teacher")
    student.metadata["defense"] = dict(tag, role="student")
    return teacher, student, {"teacher": teacher_curve, "student": student_curve}


def soft_labels(teacher, x, temperature, batch_size=512):
    out = []
    for start in range(0, len(x), batch_size):
        out.append(graph.forward(teacher, x[start:start + batch_size], temperature)[1])
    return np.concatenate(out).astype(np.float64)
