"""Synthetic DGA families, benign lists, and role-split labelled corpora."""

from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import NamedTuple

import numpy as np

from . import codec
from .errors import ConfigError, EmptyResult, ExhaustedSpace, InsufficientData, IoFailure

ROLES = ("substitute_train", "target_train", "test")
# fractions of every class assigned to each role; test takes what is left
ROLE_SHARES = (0.289, 0.676, 1.0 - 0.289 - 0.676)
BENIGN = "benign"
MIN_FAMILY_COUNT = 30
MIN_BENIGN_RATIO = 0.3

GENERATORS = ("lcg_uniform", "hash_hex", "dictionary", "cvc_pattern")
KIND_ALIASES = {"lcg": "lcg_uniform", "hex": "hash_hex", "dict": "dictionary", "cvc": "cvc_pattern"}
SHORT_NAMES = {v: k for k, v in KIND_ALIASES.items()}

_LCG_CHARS = "abcdefghijklmnopqrstuvwxyz0123456789"
_HEX_CHARS = "0123456789abcdef"
_CONSONANTS = "bcdfghjklmnpqrstvwxz"
_VOWELS = "aeiouy"

# per-kind presets used when a roster only names kinds and counts
_PRESETS = {
    "lcg_uniform": [((12, 20), "net"), ((8, 14), "com"), ((14, 22), "org"), ((10, 16), "info")],
    "hash_hex": [((16, 24), "org"), ((10, 16), "info"), ((12, 20), "com"), ((18, 26), "net")],
    "dictionary": [((8, 20), "net"), ((10, 22), "com"), ((8, 18), "org"), ((9, 20), "info")],
    "cvc_pattern": [((6, 12), "biz"), ((8, 14), "ru"), ((7, 12), "com"), ((9, 15), "net")],
}


@dataclass(frozen=True)
class FamilySpec:
    family_id: str
    generator_kind: str
    length_range: tuple[int, int]
    tld: str
    seed: int

    def __post_init__(self):
        lo, hi = self.length_range
        if self.generator_kind not in GENERATORS:
            raise ConfigError(f"unknown generator kind {self.generator_kind!r}")
        if not (4 <= lo <= hi <= 60):
            raise ConfigError(f"length range {self.length_range} outside 4..60")
        if not self.tld or "." in self.tld or not codec.is_encodable(self.tld):
            raise ConfigError(f"invalid tld {self.tld!r}")
        if not self.family_id or self.family_id == BENIGN or "," in self.family_id:
            raise ConfigError(f"invalid family id {self.family_id!r}")


def parse_roster(text: str, seed: int = 0) -> list[FamilySpec]:
    """Expand ``"lcg:2,dict:2"`` into named families (``lcg1``, ``lcg2``, ...)."""
    specs = []
    for item in filter(None, (s.strip() for s in text.split(","))):
        kind, _, n = item.partition(":")
        kind = KIND_ALIASES.get(kind, kind)
        if kind not in GENERATORS:
            raise ConfigError(f"unknown family kind in {item!r}")
        try:
            n = int(n or 1)
        except ValueError:
            raise ConfigError(f"bad family count in {item!r}") from None
        if not 1 <= n <= len(_PRESETS[kind]):
            raise ConfigError(f"{kind} supports 1..{len(_PRESETS[kind])} families")
        for k in range(n):
            length_range, tld = _PRESETS[kind][k]
            fam_seed = (seed * 1_000_003 + GENERATORS.index(kind) * 101 + k) % 2**63
            specs.append(FamilySpec(f"{SHORT_NAMES[kind]}{k + 1}", kind, length_range, tld, fam_seed))
    if not specs:
        raise ConfigError("empty family roster")
    return specs


@lru_cache(maxsize=None)
def _word_list(name: str) -> tuple[str, ...]:
    text = resources.files("agd_evade.data").joinpath(name).read_text(encoding="utf-8")
    return tuple(w for w in text.split() if w)


def dga_words():
    return _word_list("dga_words.txt")


def benign_words():
    return _word_list("benign_words.txt")


class _Lcg:
    """32-bit linear congruential stream (Numerical Recipes constants)."""

    def __init__(self, seed):
        self.state = (seed ^ 0x5DEECE66D) & 0xFFFFFFFF

    def next(self, bound):
        self.state = (1664525 * self.state + 1013904223) & 0xFFFFFFFF
        return (self.state >> 8) % bound


def _space_size(spec: FamilySpec) -> float:
    lo, hi = spec.length_range
    lengths = range(lo, hi + 1)
    if spec.generator_kind == "lcg_uniform":
        return sum(float(len(_LCG_CHARS)) ** n for n in lengths)
    if spec.generator_kind == "hash_hex":
        return sum(16.0 ** n for n in lengths)
    if spec.generator_kind == "cvc_pattern":
        c, v = len(_CONSONANTS), len(_VOWELS)
        return sum(c ** math.ceil(n / 2) * v ** (n // 2) + v ** math.ceil(n / 2) * c ** (n // 2)
                   for n in lengths)
    # dictionary: sequences of 2-3 words whose joined length is in range
    lens = np.bincount([len(w) for w in dga_words()], minlength=61)
    two = np.convolve(lens, lens)
    three = np.convolve(two, lens)
    return float(sum(two[n] + three[n] for n in lengths if n < len(two)) +
                 sum(three[n] for n in lengths if len(two) <= n < len(three)))


def _draw(spec: FamilySpec, rng: np.random.Generator, lcg: _Lcg, counter: int) -> str:
    lo, hi = spec.length_range
    kind = spec.generator_kind
    if kind == "lcg_uniform":
        n = lo + lcg.next(hi - lo + 1)
        return "".join(_LCG_CHARS[lcg.next(len(_LCG_CHARS))] for _ in range(n))
    if kind == "hash_hex":
        n = int(rng.integers(lo, hi + 1))
        digest = hashlib.sha256(f"{spec.seed}:{counter}".encode()).hexdigest()
        return digest[:n]
    if kind == "cvc_pattern":
        n = int(rng.integers(lo, hi + 1))
        groups = (_CONSONANTS, _VOWELS) if rng.random() < 0.5 else (_VOWELS, _CONSONANTS)
        return "".join(groups[i % 2][int(rng.integers(len(groups[i % 2])))] for i in range(n))
    words = dga_words()
    for _ in range(100):
        k = int(rng.integers(2, 4))
        name = "".join(words[int(rng.integers(len(words)))] for _ in range(k))
        if lo <= len(name) <= hi:
            return name
    return ""


def generate_family(spec: FamilySpec, count: int) -> list[str]:
    """``count`` unique domains ``<label>.<tld>``, deterministic in ``spec.seed``."""
    if count < 1:
        raise ConfigError("count must be >= 1")
    if count > _space_size(spec):
        raise ExhaustedSpace(f"{spec.family_id}: {count} names requested, space holds "
                             f"{int(_space_size(spec))}")
    rng = np.random.default_rng(spec.seed)
    lcg = _Lcg(spec.seed)
    seen, out = set(), []
    attempts = 0
    limit = 50 * count + 1000
    while len(out) < count:
        attempts += 1
        if attempts > limit:
            raise ExhaustedSpace(f"{spec.family_id}: only {len(out)} unique names after "
                                 f"{limit} draws")
        label = _draw(spec, rng, lcg, attempts)
        if not label or label in seen:
            continue
        seen.add(label)
        out.append(f"{label}.{spec.tld}")
    return out


class BenignList(NamedTuple):
    domains: list
    skipped: int


def parse_benign_lines(lines, limit=None, max_length=codec.MAX_LENGTH) -> BenignList:
    seen, out, skipped = set(), [], 0
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "," in line:
            line = line.rsplit(",", 1)[1].strip()
        d = line.lower()
        if len(d) > max_length or not codec.is_encodable(d) or "." not in d:
            skipped += 1
            continue
        try:
            codec.analyze_structure(d)
        except (codec.NoDot, codec.EmptyLabel):
            skipped += 1
            continue
        if d in seen:
            continue
        seen.add(d)
        out.append(d)
        if limit is not None and len(out) >= limit:
            break
    return BenignList(out, skipped)


def load_benign(path, limit=None, max_length=codec.MAX_LENGTH) -> BenignList:
    """Read one domain per line (``rank,domain`` rows accepted)."""
    try:
        with open(path, encoding="utf-8", errors="replace") as fh:
            result = parse_benign_lines(fh, limit, max_length)
    except OSError as exc:
        raise IoFailure(f"cannot read benign list {path}: {exc}") from exc
    if not result.domains:
        raise EmptyResult(f"{path} has no usable domain names")
    return result


# spread over the suffixes the synthetic families use so the suffix alone
# does not give a family away
_BENIGN_TLDS = ("com",) * 5 + ("net",) * 2 + ("org",) * 2 + ("info", "biz", "ru", "io", "co", "us")
# cumulative shares of the synthetic name styles: two words, three words,
# hyphenated pair, word plus tail, word plus digits, single word
_BENIGN_STYLE_EDGES = (0.45, 0.57, 0.6, 0.75, 0.85)
_BENIGN_TAILS = ("hq", "app", "online", "shop", "store", "labs", "hub", "now", "world", "group")


def bundled_benign(count=5000, seed=0, max_length=32) -> list[str]:
    """Well-known real domains topped up with word-compound names."""
    real = resources.files("agd_evade.data").joinpath("top_domains.txt").read_text("utf-8")
    out = parse_benign_lines(real.splitlines(), max_length=max_length).domains[:count]
    seen = set(out)
    words = benign_words()
    rng = np.random.default_rng([seed, 7])
    while len(out) < count:
        pick = lambda: words[int(rng.integers(len(words)))]  # noqa: E731
        style = int(np.searchsorted(_BENIGN_STYLE_EDGES, rng.random(), side="right"))
        if style == 0:
            label = pick() + pick()
        elif style == 1:
            label = pick() + pick() + pick()
        elif style == 2:
            label = pick() + "-" + pick()
        elif style == 3:
            label = pick() + _BENIGN_TAILS[int(rng.integers(len(_BENIGN_TAILS)))]
        elif style == 4:
            label = pick() + str(int(rng.integers(1, 100)))
        else:
            label = pick()
        tld = _BENIGN_TLDS[int(rng.integers(len(_BENIGN_TLDS)))]
        d = f"{label}.{tld}"
        if d in seen or len(d) > max_length:
            continue
        seen.add(d)
        out.append(d)
    return out


class Entry(NamedTuple):
    domain: str
    label: str
    role: str


class LabeledCorpus:
    def __init__(self, entries, classes=None):
        self.entries = list(entries)
        if classes is None:
            classes = [BENIGN] + sorted({e.label for e in self.entries} - {BENIGN})
        self.classes = tuple(classes)

    def __len__(self):
        return len(self.entries)

    @property
    def families(self):
        return tuple(c for c in self.classes if c != BENIGN)

    def select(self, role, labels=None):
        rows = [e for e in self.entries if e.role == role and (labels is None or e.label in labels)]
        return [e.domain for e in rows], [e.label for e in rows]

    def counts(self):
        table = {}
        for e in self.entries:
            table[(e.label, e.role)] = table.get((e.label, e.role), 0) + 1
        return table

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["domain", "label", "role"])
        w.writerows(self.entries)
        return buf.getvalue()

    def save(self, path):
        try:
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(self.to_csv())
        except OSError as exc:
            raise IoFailure(f"cannot write corpus {path}: {exc}") from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8", newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise IoFailure(f"cannot read corpus {path}: {exc}") from exc
        try:
            entries = [Entry(r["domain"], r["label"], r["role"]) for r in rows]
        except KeyError:
            raise ConfigError(f"{path} lacks the domain,label,role header") from None
        labels = []
        for e in entries:
            if e.role not in ROLES:
                raise ConfigError(f"unknown role {e.role!r} in {path}")
            if e.label not in labels:
                labels.append(e.label)
        classes = [BENIGN] + [lab for lab in labels if lab != BENIGN]
        return cls(entries, classes)


def split_sizes(n: int, shares) -> list[int]:
    """Largest-remainder allocation of ``n`` items; ties go to the earlier role."""
    quotas = [n * s for s in shares]
    sizes = [math.floor(q) for q in quotas]
    order = sorted(range(len(shares)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in order[: n - sum(sizes)]:
        sizes[i] += 1
    return sizes


def assemble(benign, families, split_seed: int) -> LabeledCorpus:
    """Split every class into roles.

    ``families`` is a list of ``(FamilySpec, count)``. Benign names only go to
    the two training roles.
    """
    if len(families) < 2:
        raise InsufficientData("need at least two DGA families")
    for spec, count in families:
        if count < MIN_FAMILY_COUNT:
            raise InsufficientData(f"{spec.family_id}: {count} names < {MIN_FAMILY_COUNT}")
    total = sum(count for _, count in families)
    benign = list(dict.fromkeys(benign))
    if len(benign) < MIN_BENIGN_RATIO * total:
        raise InsufficientData(f"{len(benign)} benign names < {MIN_BENIGN_RATIO} x {total} AGDs")
    ids = [spec.family_id for spec, _ in families]
    if len(set(ids)) != len(ids):
        raise ConfigError("duplicate family ids")

    entries = []
    classes = [(BENIGN, benign)] + [(spec.family_id, generate_family(spec, n)) for spec, n in families]
    benign_shares = (ROLE_SHARES[0] / (ROLE_SHARES[0] + ROLE_SHARES[1]),
                     ROLE_SHARES[1] / (ROLE_SHARES[0] + ROLE_SHARES[1]), 0.0)
    for k, (label, domains) in enumerate(classes):
        shares = benign_shares if label == BENIGN else ROLE_SHARES
        sizes = split_sizes(len(domains), shares)
        perm = np.random.default_rng([split_seed, k]).permutation(len(domains))
        start = 0
        for role, size in zip(ROLES, sizes):
            for i in perm[start:start + size]:
                entries.append(Entry(domains[i], label, role))
            start += size
    return LabeledCorpus(entries, [c for c, _ in classes])
