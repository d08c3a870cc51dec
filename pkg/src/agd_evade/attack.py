"""Saliency-guided character replacement (MaskDGA) and the random baseline.

The saliency map of a name holds, for every (position, symbol) cell, the
descent direction of the substitute's cross-entropy towards the benign
class: ``S = -dL(F(X), benign)/dX``. Large values mark the substitutions
that push the substitute hardest towards predicting benign.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from . import codec
from .errors import AgdError, ModelInputMismatch, ShapeMismatch, TooShort
from .nn import graph

MODES = ("maskdga", "random")
# the 38 symbols a replacement may use: everything but the dot
_NON_DOT = np.array([j for j in range(codec.NUM_SYMBOLS) if j != codec.DOT])


@dataclass(frozen=True)
class SaliencyMap:
    values: np.ndarray  # (len(domain), 39)

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class PerturbationPlan:
    threshold: float
    replacements: tuple  # (position, old_symbol, new_symbol)


def _structure(domain):
    s = codec.analyze_structure(domain)
    if len(s.perturbable) < 2:
        raise TooShort(f"{domain!r} has {len(s.perturbable)} perturbable characters (< 2)")
    return s


def build_jsm_batch(substitute, domains, target_class=0, batch_size=256):
    """Saliency maps for many names, one batched forward/backward per chunk."""
    if substitute.class_names[0] != "benign":
        raise ModelInputMismatch("substitute class 0 must be benign")
    out = []
    for start in range(0, len(domains), batch_size):
        chunk = [codec.normalize(d) for d in domains[start:start + batch_size]]
        if any(len(d) > substitute.input_rows for d in chunk):
            raise ModelInputMismatch(f"a name exceeds the substitute's {substitute.input_rows} rows")
        x = codec.encode_batch(chunk, substitute.input_rows, substitute.dtype)
        dx = saliency_array(substitute, x, target_class)
        out.extend(SaliencyMap(dx[b, :len(d)].copy()) for b, d in enumerate(chunk))
    return out


def saliency_array(substitute, x, target_class=0):
    """Descent direction of the targeted loss for each sample of an encoded batch.

    Works on any real-valued input, which is what the finite-difference tests use.
    """
    acts, _ = graph.forward(substitute, x)
    _, dx = graph.backward(substitute, acts, target_class)
    # backward averages over the batch; undo that so maps do not depend on batch size
    return -dx * len(x)


def build_jsm(substitute, domain, target_class=0) -> SaliencyMap:
    return build_jsm_batch(substitute, [domain], target_class)[0]


def plan_maskdga(domain: str, saliency) -> PerturbationPlan:
    """Choose the replacements for one name.

    Per perturbable position the candidate is the highest-saliency symbol other
    than the dot and the current character (lowest ordinal on ties). The
    floor(n/2) positions with the highest candidate scores are replaced,
    leftmost first on ties.
    """
    domain = codec.normalize(domain)
    s = _structure(domain)
    values = np.asarray(getattr(saliency, "values", saliency), dtype=np.float64)
    if values.shape != (len(domain), codec.NUM_SYMBOLS):
        raise ShapeMismatch(f"saliency map {values.shape} does not match {domain!r}")
    idx = codec.to_indices(domain)
    pos = np.array(s.perturbable)
    rows = values[pos].copy()
    rows[:, codec.DOT] = -np.inf
    rows[np.arange(len(pos)), idx[pos]] = -np.inf
    best = rows.argmax(axis=1)
    score = rows[np.arange(len(pos)), best]
    k = len(pos) // 2
    chosen = np.lexsort((pos, -score))[:k]
    replacements = tuple(sorted((int(pos[c]), int(idx[pos[c]]), int(best[c])) for c in chosen))
    return PerturbationPlan(float(score[chosen[-1]]), replacements)


def apply_plan(domain: str, plan: PerturbationPlan) -> str:
    chars = list(codec.normalize(domain))
    for position, _, new in plan.replacements:
        chars[position] = codec.ALPHABET[new]
    return "".join(chars)


def maskdga_perturb(domain: str, saliency):
    """Returns ``(adversarial_domain, plan)``."""
    plan = plan_maskdga(domain, saliency)
    return apply_plan(domain, plan), plan


def random_perturb(domain: str, rng_seed) -> str:
    """Replace a uniformly chosen half of the perturbable characters with
    uniformly drawn non-dot symbols different from the originals."""
    domain = codec.normalize(domain)
    s = _structure(domain)
    rng = np.random.default_rng(rng_seed)
    positions = rng.choice(np.array(s.perturbable), len(s.perturbable) // 2, replace=False)
    chars = list(domain)
    for p in positions:
        current = codec.INDEX_OF[chars[p]]
        new = current
        while new == current:
            new = int(_NON_DOT[rng.integers(len(_NON_DOT))])
        chars[p] = codec.ALPHABET[new]
    return "".join(chars)


def half_replaced(original: str, adversarial: str) -> bool:
    """True when the pair satisfies every structural constraint of the attack."""
    try:
        a = codec.analyze_structure(original)
        b = codec.analyze_structure(adversarial)
    except AgdError:
        return False
    if len(a.full_name) != len(b.full_name) or a.labels[-1] != b.labels[-1]:
        return False
    if [i for i, c in enumerate(a.full_name) if c == "."] != \
            [i for i, c in enumerate(b.full_name) if c == "."]:
        return False
    diff = [i for i, (x, y) in enumerate(zip(a.full_name, b.full_name)) if x != y]
    return set(diff) <= set(a.perturbable) and len(diff) == len(a.perturbable) // 2


@dataclass(frozen=True)
class AttackResult:
    original: str
    adversarial: str | None
    replaced_count: int
    error: str | None = None


@dataclass
class AttackReport:
    mode: str
    results: list

    @property
    def succeeded(self):
        return [r for r in self.results if r.adversarial is not None]

    @property
    def errors(self):
        return [r for r in self.results if r.error is not None]

    @property
    def collisions(self):
        outs = [r.adversarial for r in self.succeeded]
        return len(outs) - len(set(outs))

    def adversarial_domains(self):
        return [r.adversarial for r in self.succeeded]

    def summary(self):
        return {
            "mode": self.mode,
            "count": len(self.results),
            "succeeded": len(self.succeeded),
            "collisions": self.collisions,
            "error_count": len(self.errors),
            "errors": [{"domain": r.original, "error": r.error} for r in self.errors],
        }

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["original", "adversarial", "mode", "replaced_count"])
        for r in self.succeeded:
            w.writerow([r.original, r.adversarial, self.mode, r.replaced_count])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_csv(cls, text: str):
        rows = list(csv.DictReader(io.StringIO(text)))
        mode = rows[0]["mode"] if rows else "maskdga"
        return cls(mode, [AttackResult(r["original"], r["adversarial"], int(r["replaced_count"]))
                          for r in rows])


def attack_batch(substitute, domains, mode="maskdga", rng_seed=0) -> AttackReport:
    """Attack every name, keeping input order; per-name failures are recorded."""
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    results = [None] * len(domains)
    valid = []
    for i, d in enumerate(domains):
        try:
            _structure(d)
            if mode == "maskdga" and len(d) > substitute.input_rows:
                raise ModelInputMismatch(f"{d!r} exceeds {substitute.input_rows} rows")
        except AgdError as exc:
            results[i] = AttackResult(d, None, 0, f"{type(exc).__name__}: {exc}")
        else:
            valid.append(i)
    if mode == "maskdga":
        maps = build_jsm_batch(substitute, [domains[i] for i in valid]) if valid else []
        for i, sal in zip(valid, maps):
            adv, plan = maskdga_perturb(domains[i], sal)
            results[i] = AttackResult(codec.normalize(domains[i]), adv, len(plan.replacements))
    else:
        seeds = np.random.default_rng(rng_seed).integers(0, 2**63, size=len(domains))
        for i in valid:
            adv = random_perturb(domains[i], int(seeds[i]))
            n = len(codec.analyze_structure(domains[i]).perturbable) // 2
            results[i] = AttackResult(codec.normalize(domains[i]), adv, n)
    return AttackReport(mode, results)
