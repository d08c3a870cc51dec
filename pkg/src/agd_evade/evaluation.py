"""Precision / recall / F1 with DGA-collapsed correctness, and per-family views."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .errors import MisalignedReports, UnknownLabel
from .nn import graph

COLLAPSE_MODES = ("specific_class", "dga_collapsed")
CONDITIONS = ("no_attack", "random", "maskdga")
BENIGN = "benign"


@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float
    support: int
    predicted: int


@dataclass(frozen=True)
class MetricsTable:
    classes: tuple
    per_class: dict  # label -> ClassScore
    macro: tuple  # (precision, recall, f1)
    micro: tuple
    collapse_mode: str
    n: int

    @property
    def f1(self):
        """Headline score: macro F1 over classes present in the true labels."""
        return self.macro[2]

    def rows(self):
        for label in self.classes:
            s = self.per_class[label]
            yield label, s.precision, s.recall, s.f1, s.support
        yield "macro", *self.macro, self.n
        yield "micro", *self.micro, self.n


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def collapse_predictions(true_labels, pred_labels, benign=BENIGN):
    """Map any DGA prediction for a DGA sample onto the true family."""
    out = list(pred_labels)
    for i, (t, p) in enumerate(zip(true_labels, out)):
        if t != benign and p != benign:
            out[i] = t
    return out


def compute_metrics(true_labels, pred_labels, classes, collapse="dga_collapsed") -> MetricsTable:
    if collapse not in COLLAPSE_MODES:
        raise ValueError(f"collapse must be one of {COLLAPSE_MODES}")
    if len(true_labels) != len(pred_labels):
        raise MisalignedReports("true and predicted label lists differ in length")
    classes = tuple(classes)
    known = set(classes)
    for lab in list(true_labels) + list(pred_labels):
        if lab not in known:
            raise UnknownLabel(f"label {lab!r} is not one of {classes}")
    if collapse == "dga_collapsed":
        pred_labels = collapse_predictions(true_labels, pred_labels)
    index = {c: i for i, c in enumerate(classes)}
    t = np.array([index[x] for x in true_labels], dtype=np.int64)
    p = np.array([index[x] for x in pred_labels], dtype=np.int64)
    k = len(classes)
    tp = np.bincount(t[t == p], minlength=k)
    support = np.bincount(t, minlength=k)
    predicted = np.bincount(p, minlength=k)
    per_class = {}
    for i, c in enumerate(classes):
        prec = tp[i] / predicted[i] if predicted[i] else 0.0
        rec = tp[i] / support[i] if support[i] else 0.0
        per_class[c] = ClassScore(float(prec), float(rec), float(_f1(prec, rec)),
                                  int(support[i]), int(predicted[i]))
    present = [c for c in classes if per_class[c].support > 0]
    if present:
        macro = tuple(float(np.mean([getattr(per_class[c], f) for c in present]))
                      for f in ("precision", "recall", "f1"))
        sel = [index[c] for c in present]
        mp = tp[sel].sum() / predicted[sel].sum() if predicted[sel].sum() else 0.0
        mr = tp[sel].sum() / support[sel].sum()
        micro = (float(mp), float(mr), float(_f1(mp, mr)))
    else:
        macro = micro = (0.0, 0.0, 0.0)
    return MetricsTable(classes, per_class, macro, micro, collapse, len(true_labels))


def evaluate(model, domains, labels, collapse="dga_collapsed") -> MetricsTable:
    unknown = set(labels) - set(model.class_names)
    if unknown:
        raise UnknownLabel(f"labels {sorted(unknown)} are not model classes")
    pred = graph.predict(model, list(domains)) if len(domains) else np.zeros(0, dtype=int)
    return compute_metrics(labels, [model.class_names[i] for i in pred], model.class_names, collapse)


def per_family_report(model, domains, labels, conditions: dict, collapse="dga_collapsed"):
    """One row per (family, condition).

    ``conditions`` maps a condition name to domains aligned with ``domains``
    (the attacked versions; use ``domains`` itself for the clean case).
    """
    rows = []
    for condition, attacked in conditions.items():
        if len(attacked) != len(domains):
            raise MisalignedReports(f"{condition}: {len(attacked)} outputs for {len(domains)} inputs")
        table = evaluate(model, attacked, labels, collapse)
        for family in model.class_names:
            s = table.per_class[family]
            if family == BENIGN or s.support == 0:
                continue
            rows.append({"family": family, "condition": condition, "precision": s.precision,
                         "recall": s.recall, "f1": s.f1, "support": s.support})
    return rows


def format_float(x):
    return f"{x:.6f}"


def metrics_csv(records) -> str:
    """``records`` holds ``(model, defense, MetricsTable)`` triples."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "defense", "collapse", "class", "precision", "recall", "f1", "support"])
    for model_name, defense, table in records:
        for label, p, r, f, n in table.rows():
            w.writerow([model_name, defense, table.collapse_mode, label,
                        format_float(p), format_float(r), format_float(f), n])
    return buf.getvalue()


def per_family_csv(records) -> str:
    """``records`` holds ``(model, defense, rows)`` with rows from :func:`per_family_report`."""
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["model", "defense", "family", "condition", "precision", "recall", "f1", "support"])
    for model_name, defense, rows in records:
        for r in rows:
            w.writerow([model_name, defense, r["family"], r["condition"], format_float(r["precision"]),
                        format_float(r["recall"]), format_float(r["f1"]), r["support"]])
    return buf.getvalue()
