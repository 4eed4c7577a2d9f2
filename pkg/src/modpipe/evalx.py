"""Evaluation: per-category average precision, model eval tables, and
adapters for externally labeled datasets.

average_precision walks the distinct score levels from high to low (every
prefix threshold), accumulating precision at each level weighted by the true
positives that level contributes.  Grouping by score level rather than by
rank position makes the value independent of how ties are ordered and of
whole-set duplication, and it matches a brute-force threshold sweep exactly,
float for float.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from .corpus import Dataset, LabelRecord, Sample, consolidate
from .net import Model
from .taxonomy import CATEGORIES, Label, LabelVector, TaxonomyMapping, map_external, normalize


class EvalError(Exception):
    pass


class UndefinedMetricError(EvalError):
    pass


def average_precision(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Non-interpolated AP over prefix thresholds (one per distinct score)."""
    if len(scores) != len(labels):
        raise EvalError("scores and labels differ in length")
    total_pos = sum(1 for flag in labels if flag)
    if total_pos == 0:
        raise UndefinedMetricError("average precision is undefined without positives")
    order = sorted(range(len(scores)), key=lambda i: -scores[i])
    ap_sum = 0.0
    tp = 0
    pp = 0
    i = 0
    n = len(order)
    while i < n:
        j = i
        level_pos = 0
        while j < n and scores[order[j]] == scores[order[i]]:
            if labels[order[j]]:
                level_pos += 1
            j += 1
        pp += j - i
        tp += level_pos
        ap_sum += (tp / pp) * level_pos
        i = j
    return ap_sum / total_pos


@dataclass
class CategoryEval:
    auprc: Optional[float]
    positives: int
    total: int

    def as_obj(self) -> dict:
        return {"auprc": self.auprc, "positives": self.positives, "total": self.total}


@dataclass
class RegressionCase:
    case_id: str
    text: str
    expected: LabelVector
    scores: dict[str, float]
    passed: bool
    failures: list[str]

    def as_obj(self) -> dict:
        return {
            "id": self.case_id,
            "text": self.text,
            "expected": self.expected.as_dict(),
            "scores": self.scores,
            "pass": self.passed,
            "failures": self.failures,
        }


@dataclass
class EvalTable:
    dataset: str
    checkpoint: str
    categories: dict[str, CategoryEval]
    regression: list[RegressionCase] = field(default_factory=list)

    def as_obj(self) -> dict:
        obj = {
            "dataset": self.dataset,
            "checkpoint": self.checkpoint,
            "categories": {name: ce.as_obj() for name, ce in self.categories.items()},
        }
        if self.regression:
            obj["regression"] = {
                "cases": [case.as_obj() for case in self.regression],
                "passed": sum(case.passed for case in self.regression),
                "total": len(self.regression),
            }
        return obj

    def as_text(self) -> str:
        lines = [f"dataset: {self.dataset}   checkpoint: {self.checkpoint}"]
        lines.append(f"{'category':<10} {'auprc':>8} {'pos':>6} {'total':>7}")
        for name, ce in self.categories.items():
            shown = "n/a" if ce.auprc is None else f"{ce.auprc:.4f}"
            lines.append(f"{name:<10} {shown:>8} {ce.positives:>6} {ce.total:>7}")
        if self.regression:
            passed = sum(case.passed for case in self.regression)
            lines.append(f"regression: {passed}/{len(self.regression)} cases pass")
            for case in self.regression:
                status = "pass" if case.passed else f"FAIL ({', '.join(case.failures)})"
                lines.append(f"  {case.case_id}: {status}")
        return "\n".join(lines)


def _consolidated_of(sample: Sample) -> Optional[LabelVector]:
    if sample.consolidated is not None:
        return sample.consolidated
    if sample.labels:
        return consolidate(sample)
    return None


def evaluate(
    model: Model,
    dataset: Dataset,
    redteam_cases: Optional[Sequence[Sample]] = None,
    threshold: float = 0.5,
) -> EvalTable:
    """Score every sample in evaluation mode and compute per-category AP over
    the samples where that category is labeled.  Categories without positives
    are reported as undefined rather than coerced."""
    samples = list(dataset)
    vectors = [_consolidated_of(s) for s in samples]
    P = model.score_texts([s.text for s in samples]) if samples else None
    categories: dict[str, CategoryEval] = {}
    for k, cat in enumerate(CATEGORIES):
        scores, flags = [], []
        for i, vec in enumerate(vectors):
            if vec is None or vec.values[k] is Label.UNLABELED:
                continue
            scores.append(float(P[k, i]))
            flags.append(vec.values[k] is Label.POSITIVE)
        positives = sum(flags)
        try:
            ap = average_precision(scores, flags) if scores else None
        except UndefinedMetricError:
            ap = None
        categories[cat.value] = CategoryEval(auprc=ap, positives=positives, total=len(scores))
    table = EvalTable(dataset=dataset.name, checkpoint=model.checkpoint_id(), categories=categories)
    if redteam_cases:
        table.regression = regression_section(model, redteam_cases, threshold)
    return table


def regression_section(model: Model, cases: Sequence[Sample], threshold: float = 0.5) -> list[RegressionCase]:
    """Pass/fail per stored red-team case: every expected-labeled category
    must land on the right side of the decision threshold."""
    out: list[RegressionCase] = []
    if not cases:
        return out
    P = model.score_texts([c.text for c in cases])
    for i, case in enumerate(cases):
        expected = _consolidated_of(case)
        if expected is None:
            continue
        failures = []
        for k, cat in enumerate(CATEGORIES):
            value = expected.values[k]
            if value is Label.UNLABELED:
                continue
            flagged = float(P[k, i]) > threshold
            if flagged != (value is Label.POSITIVE):
                failures.append(cat.value)
        out.append(
            RegressionCase(
                case_id=case.id,
                text=case.text,
                expected=expected,
                scores={c.value: float(P[k, i]) for k, c in enumerate(CATEGORIES)},
                passed=not failures,
                failures=failures,
            )
        )
    return out


@dataclass(frozen=True)
class LabelFieldSpec:
    """How to read an external row: which field holds the text, which holds
    the id, and an optional score threshold (binary fields pass through)."""

    text_field: str = "text"
    id_field: Optional[str] = None
    threshold: Optional[float] = None


@dataclass
class AdaptResult:
    dataset: Dataset
    skipped: int
    errors: list[str] = field(default_factory=list)


def adapt_external(path, mapping: TaxonomyMapping, spec: LabelFieldSpec) -> AdaptResult:
    """Build a Dataset from an external JSONL/CSV file via taxonomy mapping.
    Rows missing a mapped field are skipped and counted, not fatal."""
    path = Path(path)
    rows = _read_rows(path)
    ds = Dataset(name=path.stem)
    skipped = 0
    errors: list[str] = []
    for rowno, row in enumerate(rows, start=1):
        try:
            text = row[spec.text_field]
        except KeyError:
            skipped += 1
            errors.append(f"row {rowno}: missing text field {spec.text_field!r}")
            continue
        try:
            values = {f: float(row[f]) for f in mapping.fields()}
        except KeyError as exc:
            skipped += 1
            errors.append(f"row {rowno}: missing mapped field {exc.args[0]!r}")
            continue
        except (TypeError, ValueError):
            skipped += 1
            errors.append(f"row {rowno}: non-numeric mapped field")
            continue
        per_category = map_external(values, mapping)
        cut = spec.threshold if spec.threshold is not None else 0.5
        raw = {cat: ("positive" if score > cut else "negative") for cat, score in per_category.items()}
        vector = normalize(raw)
        sid = str(row[spec.id_field]) if spec.id_field and spec.id_field in row else f"ext-{rowno}"
        ds.add(
            Sample(
                id=sid,
                text=str(text),
                domain="source",
                metadata={"origin": "external", "source_file": path.name},
                labels=[LabelRecord(annotator_id="adapter", role="oracle", vector=vector, timestamp=0)],
                consolidated=vector,
            )
        )
    return AdaptResult(dataset=ds, skipped=skipped, errors=errors)


def _read_rows(path: Path) -> list[dict]:
    if path.suffix.lower() == ".csv":
        with open(path, encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise EvalError(f"{path}:{lineno}: malformed row: {exc}") from exc
    return rows


def write_table(table: EvalTable, path):
    with open(Path(path), "w", encoding="utf-8") as fh:
        json.dump(table.as_obj(), fh, indent=2, sort_keys=True)
        fh.write("\n")
