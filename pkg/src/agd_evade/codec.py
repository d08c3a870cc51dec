"""Character-level one-hot representation of domain names.

Each character of a name maps to one row of a binary matrix with one column
per alphabet symbol. Names are at most 65 characters, so a matrix never holds
more than 65 * 39 cells.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import EmptyDomain, EmptyLabel, InvalidCharacter, NoDot, NotOneHot, TooLong

ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789-_."
NUM_SYMBOLS = len(ALPHABET)
MAX_LENGTH = 65
DOT = ALPHABET.index(".")
INDEX_OF = {ch: i for i, ch in enumerate(ALPHABET)}

# 256-entry lookup used by the batch encoder; -1 marks characters outside the alphabet
_BYTE_TABLE = np.full(256, -1, dtype=np.int8)
for _i, _ch in enumerate(ALPHABET):
    _BYTE_TABLE[ord(_ch)] = _i
    if _ch.isalpha():
        _BYTE_TABLE[ord(_ch.upper())] = _i


def normalize(domain: str) -> str:
    """Lowercase ``domain`` and check it against the alphabet and length bound."""
    if not domain:
        raise EmptyDomain("empty domain name")
    domain = domain.lower()
    if len(domain) > MAX_LENGTH:
        raise TooLong(f"{domain!r} has {len(domain)} characters (max {MAX_LENGTH})")
    for ch in domain:
        if ch not in INDEX_OF:
            raise InvalidCharacter(f"{ch!r} in {domain!r} is outside the alphabet")
    return domain


def is_encodable(domain: str) -> bool:
    try:
        normalize(domain)
    except (EmptyDomain, TooLong, InvalidCharacter):
        return False
    return True


def to_indices(domain: str) -> np.ndarray:
    domain = normalize(domain)
    return np.fromiter((INDEX_OF[ch] for ch in domain), dtype=np.int64, count=len(domain))


def encode(domain: str) -> np.ndarray:
    """One-hot matrix of shape ``(len(domain), 39)`` with dtype uint8."""
    idx = to_indices(domain)
    out = np.zeros((idx.size, NUM_SYMBOLS), dtype=np.uint8)
    out[np.arange(idx.size), idx] = 1
    return out


def decode(matrix) -> str:
    m = np.asarray(matrix)
    if m.ndim != 2 or m.shape[1] != NUM_SYMBOLS or m.shape[0] < 1:
        raise NotOneHot(f"expected an (n, {NUM_SYMBOLS}) matrix, got {m.shape}")
    ones = m == 1
    valid = (ones.sum(axis=1) == 1) & ((m == 0) | ones).all(axis=1)
    if not valid.all():
        row = int(np.flatnonzero(~valid)[0])
        raise NotOneHot(f"row {row} is not one-hot")
    return "".join(ALPHABET[j] for j in ones.argmax(axis=1))


def encode_batch(domains, rows: int, dtype=np.float32) -> np.ndarray:
    """Encode and right-pad ``domains`` into a ``(batch, rows, 39)`` array.

    Padding rows are all zero. Names longer than ``rows`` raise TooLong.
    """
    raw = [d.encode("ascii", errors="replace") if isinstance(d, str) else bytes(d) for d in domains]
    for d, b in zip(domains, raw):
        if not b:
            raise EmptyDomain("empty domain name")
        if len(b) > rows:
            raise TooLong(f"{d!r} does not fit {rows} input rows")
    idx = _kernels.lookup_indices(raw, _BYTE_TABLE, rows)
    if idx.size and (idx == -2).any():
        bad = int(np.flatnonzero((idx == -2).any(axis=1))[0])
        raise InvalidCharacter(f"{domains[bad]!r} has a character outside the alphabet")
    return _kernels.onehot(idx, NUM_SYMBOLS, np.dtype(dtype))


@dataclass(frozen=True)
class DomainStructure:
    full_name: str
    labels: tuple[str, ...]
    perturbable: tuple[int, ...]

    @property
    def suffix(self) -> str:
        return self.labels[-1]

    @property
    def target_label(self) -> str:
        """The label whose characters may be perturbed."""
        start = self.perturbable[0]
        return self.full_name[start:self.perturbable[-1] + 1]


def analyze_structure(domain: str) -> DomainStructure:
    """Split ``domain`` into labels and locate the perturbable characters.

    Only the label directly left of the final one is perturbable; dots and the
    final (suffix) label never are.
    """
    domain = normalize(domain)
    if "." not in domain:
        raise NoDot(f"{domain!r} has no suffix separator")
    labels = tuple(domain.split("."))
    if any(not lab for lab in labels):
        raise EmptyLabel(f"{domain!r} has an empty label")
    start = sum(len(lab) + 1 for lab in labels[:-2])
    positions = tuple(range(start, start + len(labels[-2])))
    return DomainStructure(domain, labels, positions)
