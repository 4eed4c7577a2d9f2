"""Hashed n-gram featurization.

Stands in for a pretrained text encoder at the input boundary: every text
maps deterministically to a sparse L2-normalized vector of signed hashed
word and character n-gram counts.  Character n-grams run across whitespace
on purpose; they are the defense against adversarial spacing ("w h o r e s").
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

# Word n-gram tokens are joined with a separator that cannot appear in
# whitespace-split tokens, so distinct token tuples never collide pre-hash.
_GRAM_JOIN = "\x1f"


class FeatureError(Exception):
    pass


def fnv1a64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class FeaturizerConfig:
    word_orders: tuple[int, ...] = (1, 2)
    char_orders: tuple[int, ...] = (3, 4, 5)
    dim: int = 1 << 18
    signed: bool = True
    lowercase: bool = True

    def __post_init__(self):
        if self.dim < 1 or (self.dim & (self.dim - 1)) != 0:
            raise FeatureError(f"dimensionality must be a power of two, got {self.dim}")
        if not self.word_orders and not self.char_orders:
            raise FeatureError("at least one n-gram order is required")
        if any(n < 1 for n in self.word_orders + self.char_orders):
            raise FeatureError("n-gram orders must be >= 1")

    def as_obj(self) -> dict:
        return {
            "word_orders": list(self.word_orders),
            "char_orders": list(self.char_orders),
            "dim": self.dim,
            "signed": self.signed,
            "lowercase": self.lowercase,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "FeaturizerConfig":
        return cls(
            word_orders=tuple(obj["word_orders"]),
            char_orders=tuple(obj["char_orders"]),
            dim=int(obj["dim"]),
            signed=bool(obj["signed"]),
            lowercase=bool(obj["lowercase"]),
        )


@dataclass(frozen=True)
class SparseVector:
    dim: int
    indices: np.ndarray  # int64, strictly increasing
    values: np.ndarray  # float64

    @property
    def nnz(self) -> int:
        return int(self.indices.size)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.values * self.values)))

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.dim)
        dense[self.indices] = self.values
        return dense


def grams(text: str, cfg: FeaturizerConfig) -> list[str]:
    """Enumerate tagged n-gram keys for a text, in deterministic order."""
    if cfg.lowercase:
        text = text.lower()
    out: list[str] = []
    tokens = text.split()
    for n in cfg.word_orders:
        tag = f"w{n}:"
        for i in range(len(tokens) - n + 1):
            out.append(tag + _GRAM_JOIN.join(tokens[i : i + n]))
    for n in cfg.char_orders:
        tag = f"c{n}:"
        for i in range(len(text) - n + 1):
            out.append(tag + text[i : i + n])
    return out


def gram_slot(key: str, cfg: FeaturizerConfig) -> tuple[int, float]:
    """Hash one tagged n-gram key to (index, sign)."""
    h = fnv1a64(key.encode("utf-8"))
    index = h & (cfg.dim - 1)
    sign = -1.0 if cfg.signed and (h >> 63) & 1 else 1.0
    return index, sign


class Featurizer:
    """Featurizer with memoized gram hashing and per-text vectors.

    The caches only ever hold deterministic values, so sharing an instance
    across calls cannot change any output.
    """

    def __init__(self, cfg: FeaturizerConfig):
        self.cfg = cfg
        self._slot_memo: dict[str, tuple[int, float]] = {}
        self._text_memo: dict[str, SparseVector] = {}

    def featurize(self, text: str) -> SparseVector:
        hit = self._text_memo.get(text)
        if hit is not None:
            return hit
        acc: dict[int, float] = {}
        memo = self._slot_memo
        for key in grams(text, self.cfg):
            slot = memo.get(key)
            if slot is None:
                slot = gram_slot(key, self.cfg)
                memo[key] = slot
            index, sign = slot
            acc[index] = acc.get(index, 0.0) + sign
        indices = np.array(sorted(i for i, v in acc.items() if v != 0.0), dtype=np.int64)
        values = np.array([acc[i] for i in indices], dtype=np.float64)
        norm = np.sqrt(np.sum(values * values))
        if norm > 0.0:
            values = values / norm
        vec = SparseVector(self.cfg.dim, indices, values)
        self._text_memo[text] = vec
        return vec

    def matrix(self, texts: Sequence[str]) -> sp.csr_matrix:
        """Stack featurized texts into one CSR matrix of shape (len(texts), dim)."""
        indptr = [0]
        indices: list[np.ndarray] = []
        values: list[np.ndarray] = []
        for text in texts:
            vec = self.featurize(text)
            indices.append(vec.indices)
            values.append(vec.values)
            indptr.append(indptr[-1] + vec.nnz)
        return sp.csr_matrix(
            (
                np.concatenate(values) if values else np.zeros(0),
                np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
                np.array(indptr, dtype=np.int64),
            ),
            shape=(len(texts), self.cfg.dim),
        )


_SHARED: dict[FeaturizerConfig, Featurizer] = {}


def shared_featurizer(cfg: FeaturizerConfig) -> Featurizer:
    feat = _SHARED.get(cfg)
    if feat is None:
        feat = _SHARED[cfg] = Featurizer(cfg)
    return feat


def featurize(text: str, cfg: FeaturizerConfig) -> SparseVector:
    return shared_featurizer(cfg).featurize(text)


def matrix(texts: Iterable[str], cfg: FeaturizerConfig) -> sp.csr_matrix:
    return shared_featurizer(cfg).matrix(list(texts))
