"""Dataset persistence and label bookkeeping.

Samples carry raw text, a domain tag, free-form metadata, and any number of
label records from annotators, auditors, or simulated oracles.  Storage is
JSONL, one sample per line, so large corpora stay streamable and diffs stay
readable.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .taxonomy import Label, LabelVector, normalize

DOMAINS = ("source", "target", "synthetic")

EMAIL_TOKEN = "[EMAIL]"
PHONE_TOKEN = "[PHONE]"
USERINFO_TOKEN = "[USER]"


class CorpusError(Exception):
    pass


class ConsolidationError(CorpusError):
    pass


ROLES = ("annotator", "auditor", "oracle")

# Auditor labels are treated as ground truth; oracle records stand in for
# ordinary annotators in simulations, so they share the lower rank.
_ROLE_RANK = {"auditor": 1, "annotator": 0, "oracle": 0}


@dataclass(frozen=True)
class LabelRecord:
    annotator_id: str
    role: str
    vector: LabelVector
    timestamp: int

    def __post_init__(self):
        if self.role not in ROLES:
            raise CorpusError(f"unknown label role: {self.role!r}")

    def as_obj(self) -> dict:
        return {
            "annotator_id": self.annotator_id,
            "role": self.role,
            "vector": self.vector.as_dict(),
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "LabelRecord":
        return cls(
            annotator_id=str(obj["annotator_id"]),
            role=str(obj["role"]),
            vector=normalize(obj.get("vector", {})),
            timestamp=int(obj["timestamp"]),
        )


@dataclass
class Sample:
    id: str
    text: str
    domain: str = "source"
    metadata: dict[str, str] = field(default_factory=dict)
    labels: list[LabelRecord] = field(default_factory=list)
    consolidated: Optional[LabelVector] = None

    def __post_init__(self):
        if self.domain not in DOMAINS:
            raise CorpusError(f"unknown domain {self.domain!r} for sample {self.id!r}")
        if not self.text:
            raise CorpusError(f"sample {self.id!r} has empty text")

    def as_obj(self) -> dict:
        obj = {
            "id": self.id,
            "text": self.text,
            "domain": self.domain,
            "metadata": dict(self.metadata),
            "labels": [r.as_obj() for r in self.labels],
        }
        if self.consolidated is not None:
            obj["consolidated"] = self.consolidated.as_dict()
        return obj

    @classmethod
    def from_obj(cls, obj: dict) -> "Sample":
        consolidated = None
        if "consolidated" in obj:
            consolidated = normalize(obj["consolidated"])
        return cls(
            id=str(obj["id"]),
            text=str(obj["text"]),
            domain=str(obj.get("domain", "source")),
            metadata={str(k): str(v) for k, v in obj.get("metadata", {}).items()},
            labels=[LabelRecord.from_obj(r) for r in obj.get("labels", [])],
            consolidated=consolidated,
        )


class Dataset:
    """Ordered collection of samples with exact id lookup."""

    def __init__(self, name: str = "", samples: Iterable[Sample] = ()):
        self.name = name
        self._samples: list[Sample] = []
        self._by_id: dict[str, Sample] = {}
        for s in samples:
            self.add(s)

    def add(self, sample: Sample):
        if sample.id in self._by_id:
            raise CorpusError(f"duplicate sample id: {sample.id!r}")
        self._samples.append(sample)
        self._by_id[sample.id] = sample

    def __len__(self) -> int:
        return len(self._samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self._samples)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._by_id

    def get(self, sample_id: str) -> Sample:
        try:
            return self._by_id[sample_id]
        except KeyError:
            raise CorpusError(f"no sample with id {sample_id!r}") from None

    def ids(self) -> list[str]:
        return [s.id for s in self._samples]

    def subset(self, ids: Iterable[str], name: str = "") -> "Dataset":
        return Dataset(name or self.name, (self.get(i) for i in ids))

    def stats(self) -> dict:
        """Per-category positive/negative/unlabeled counts over consolidated labels."""
        from .taxonomy import CATEGORIES

        counts = {c.value: {"positive": 0, "negative": 0, "unlabeled": 0} for c in CATEGORIES}
        labeled = 0
        for s in self._samples:
            vec = s.consolidated
            if vec is None and s.labels:
                vec = consolidate(s)
            if vec is None:
                continue
            labeled += 1
            for c, v in zip(CATEGORIES, vec.values):
                counts[c.value][v.value] += 1
        return {"size": len(self._samples), "labeled": labeled, "categories": counts}

    def __eq__(self, other) -> bool:
        # Name is presentation metadata (derived from the file stem on
        # import), so equality is over content only.
        if not isinstance(other, Dataset):
            return NotImplemented
        return [s.as_obj() for s in self._samples] == [s.as_obj() for s in other._samples]


def import_jsonl(path) -> Dataset:
    path = Path(path)
    ds = Dataset(name=path.stem)
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                sample = Sample.from_obj(obj)
            except CorpusError:
                raise
            except Exception as exc:
                raise CorpusError(f"{path}:{lineno}: malformed sample line: {exc}") from exc
            try:
                ds.add(sample)
            except CorpusError as exc:
                raise CorpusError(f"{path}:{lineno}: {exc}") from None
    return ds


def sample_line(sample: Sample) -> str:
    return json.dumps(sample.as_obj(), ensure_ascii=False, separators=(",", ":"))


def export_jsonl(ds: Dataset, path):
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for s in ds:
            fh.write(sample_line(s))
            fh.write("\n")


# Userinfo must run before the e-mail pass: "user:pw@host" contains an
# e-mail-shaped substring.  Placeholders contain no digits or '@', so every
# pass is idempotent.
_USERINFO_RE = re.compile(r"(?<=://)[^/@\s:]+(?::[^/@\s]*)?(?=@)")
_EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}")
_PHONE_RE = re.compile(r"\+?\d(?:[\s().-]?\d){6,14}")


def mask_pii(text: str) -> str:
    """Replace e-mail addresses, phone-shaped digit runs, and URL userinfo
    with fixed placeholders."""
    text = _USERINFO_RE.sub(USERINFO_TOKEN, text)
    text = _EMAIL_RE.sub(EMAIL_TOKEN, text)
    text = _PHONE_RE.sub(PHONE_TOKEN, text)
    return text


def consolidate(sample: Sample) -> LabelVector:
    """Resolve a sample's label records into one vector.

    Per category: auditor records beat annotator/oracle records; within the
    winning role rank the most recent record that labeled the category wins.
    The result is normalized.
    """
    if not sample.labels:
        raise ConsolidationError(f"sample {sample.id!r} has no label records")
    from .taxonomy import CATEGORIES

    resolved = {}
    for ci, cat in enumerate(CATEGORIES):
        best = None  # (rank, timestamp, arrival order) of the winning record
        value = Label.UNLABELED
        for order, rec in enumerate(sample.labels):
            v = rec.vector.values[ci]
            if v is Label.UNLABELED:
                continue
            key = (_ROLE_RANK[rec.role], rec.timestamp, order)
            if best is None or key > best:
                best = key
                value = v
        resolved[cat] = value
    return normalize(resolved)


def split_half(ds: Dataset, seed: int) -> tuple[Dataset, Dataset]:
    """Deterministic disjoint half split; the first part gets the extra
    sample when |ds| is odd.  The split depends on ids, not insertion order."""
    if len(ds) < 2:
        raise CorpusError(f"need at least 2 samples to split, got {len(ds)}")
    ids = sorted(ds.ids())
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    perm = rng.permutation(len(ids))
    shuffled = [ids[i] for i in perm]
    cut = (len(ids) + 1) // 2
    return (
        ds.subset(shuffled[:cut], name=f"{ds.name}/half0"),
        ds.subset(shuffled[cut:], name=f"{ds.name}/half1"),
    )
