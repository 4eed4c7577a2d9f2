"""Model probing: greedy input reduction to expose key tokens, lexicon
audit of reduced strings, and red-team case capture as a regression suite.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from filelock import FileLock

from .corpus import Dataset, LabelRecord, Sample, consolidate, import_jsonl, sample_line
from .net import Model
from .taxonomy import CATEGORIES, Category, Label, LabelVector, normalize, parse_category


class ProbeError(Exception):
    pass


@dataclass
class KeyTokenResult:
    sample_id: Optional[str]
    category: str
    original_text: str
    original_score: float
    reduced_tokens: list[str]
    reduced_score: float
    chars_before: int
    chars_after: int
    skipped: bool = False  # initial score below the keep threshold

    @property
    def reduced_text(self) -> str:
        return " ".join(self.reduced_tokens)

    def as_obj(self) -> dict:
        return {
            "id": self.sample_id,
            "category": self.category,
            "original_score": self.original_score,
            "reduced": self.reduced_text,
            "reduced_score": self.reduced_score,
            "chars_before": self.chars_before,
            "chars_after": self.chars_after,
            "skipped": self.skipped,
        }


def input_reduce(
    model: Model,
    text: str,
    category,
    keep_threshold: float = 0.8,
    sample_id: Optional[str] = None,
) -> KeyTokenResult:
    """Greedily remove single tokens while the category score stays at or
    above the threshold; among candidate removals the highest surviving
    score wins, earliest position on ties.  Stops at one token."""
    cat = parse_category(category)
    k = CATEGORIES.index(cat)
    tokens = text.split()
    if not tokens:
        raise ProbeError("cannot reduce empty text")
    original_score = float(model.score_text(text)[k])
    if original_score < keep_threshold:
        return KeyTokenResult(
            sample_id=sample_id,
            category=cat.value,
            original_text=text,
            original_score=original_score,
            reduced_tokens=tokens,
            reduced_score=original_score,
            chars_before=len(text),
            chars_after=len(text),
            skipped=True,
        )
    score = original_score
    while len(tokens) > 1:
        candidates = [" ".join(tokens[:i] + tokens[i + 1 :]) for i in range(len(tokens))]
        cand_scores = model.score_texts(candidates)[k]
        best = int(np.argmax(cand_scores))
        if float(cand_scores[best]) < keep_threshold:
            break
        tokens = tokens[:best] + tokens[best + 1 :]
        score = float(cand_scores[best])
    return KeyTokenResult(
        sample_id=sample_id,
        category=cat.value,
        original_text=text,
        original_score=original_score,
        reduced_tokens=tokens,
        reduced_score=score,
        chars_before=len(text),
        chars_after=len(" ".join(tokens)),
    )


def load_lexicon(path) -> list[str]:
    path = Path(path)
    if not path.exists():
        raise ProbeError(f"lexicon file not found: {path}")
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                entries.append(line.lower())
    return entries


@dataclass
class KeyTokenReport:
    results: list[KeyTokenResult]
    mean_chars_before: Optional[float]
    mean_chars_after: Optional[float]
    lexicon_match_fraction: Optional[float]
    non_matching: list[KeyTokenResult] = field(default_factory=list)

    def as_obj(self) -> dict:
        return {
            "count": len(self.results),
            "mean_chars_before": self.mean_chars_before,
            "mean_chars_after": self.mean_chars_after,
            "lexicon_match_fraction": self.lexicon_match_fraction,
            "non_matching": [r.as_obj() for r in self.non_matching],
            "results": [r.as_obj() for r in self.results],
        }


def keytoken_report(model: Model, dataset: Dataset, lexicon_path, keep_threshold: float = 0.8) -> KeyTokenReport:
    """Reduce every sample/category pair scoring at or above the threshold
    and audit the reduced strings against a known-unsafe lexicon
    (case-insensitive substring match)."""
    lexicon = load_lexicon(lexicon_path)
    samples = list(dataset)
    results: list[KeyTokenResult] = []
    if samples:
        P = model.score_texts([s.text for s in samples])
        for i, s in enumerate(samples):
            for k, cat in enumerate(CATEGORIES):
                if float(P[k, i]) < keep_threshold:
                    continue
                results.append(input_reduce(model, s.text, cat, keep_threshold, sample_id=s.id))
    if not results:
        return KeyTokenReport(
            results=[], mean_chars_before=None, mean_chars_after=None, lexicon_match_fraction=None
        )
    matched = [r for r in results if _matches(r.reduced_text, lexicon)]
    non_matching = [r for r in results if not _matches(r.reduced_text, lexicon)]
    return KeyTokenReport(
        results=results,
        mean_chars_before=float(np.mean([r.chars_before for r in results])),
        mean_chars_after=float(np.mean([r.chars_after for r in results])),
        lexicon_match_fraction=len(matched) / len(results),
        non_matching=non_matching,
    )


def _matches(reduced: str, lexicon: Sequence[str]) -> bool:
    lowered = reduced.lower()
    return any(entry in lowered for entry in lexicon)


class RedTeamStore:
    """Append-only store of red-team cases in the corpus JSONL schema; the
    cases double as a regression suite for every later evaluation."""

    def __init__(self, path):
        self.path = Path(path)
        self._lock = FileLock(str(self.path) + ".lock")

    def load(self) -> list[Sample]:
        if not self.path.exists():
            return []
        return list(import_jsonl(self.path))

    def append(
        self,
        text: str,
        scores: Optional[dict[str, float]],
        expected: LabelVector,
        note: str = "",
        timestamp: Optional[int] = None,
    ) -> tuple[Sample, bool]:
        """Store a case; returns (sample, duplicate_warning)."""
        if not text:
            raise ProbeError("red-team case needs non-empty text")
        expected = normalize(expected)
        with self._lock:
            existing = self.load()
            duplicate = any(s.text == text for s in existing)
            case_id = f"rt-{len(existing):06d}"
            metadata = {"origin": "redteam"}
            if note:
                metadata["note"] = note
            if scores:
                metadata["scores"] = json.dumps(scores, sort_keys=True)
            sample = Sample(
                id=case_id,
                text=text,
                domain="target",
                metadata=metadata,
                labels=[
                    LabelRecord(
                        annotator_id="redteam",
                        role="annotator",
                        vector=expected,
                        timestamp=int(time.time()) if timestamp is None else timestamp,
                    )
                ],
                consolidated=expected,
            )
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(sample_line(sample))
                fh.write("\n")
        return sample, duplicate


def record_redteam_case(
    store: RedTeamStore,
    text: str,
    scores: Optional[dict[str, float]],
    expected,
    note: str = "",
) -> tuple[Sample, bool]:
    if not isinstance(expected, LabelVector):
        expected = normalize(expected)
    return store.append(text, scores, expected, note)
