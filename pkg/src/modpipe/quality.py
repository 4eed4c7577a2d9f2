"""Labeling quality control: targeted audit sampling, per-category F-1
against auditor ground truth, split-half cross-validation mislabel flagging,
and the relabel trigger.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .corpus import Dataset, consolidate, split_half
from .features import FeaturizerConfig
from .net import NetworkConfig
from .select import Oracle, ScoreTable
from .taxonomy import CATEGORIES, Label, LabelVector
from .train import TrainConfig, train


class QualityError(Exception):
    pass


def _rng(seed: int, stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(stream,)))


def audit_select(dataset: Dataset, scores: ScoreTable, seed: int, per_side: int = 10) -> dict[str, list[str]]:
    """Per category: up to per_side uniform draws from the annotator-positive
    samples and up to per_side from the samples with model probability above
    0.5, deduplicated.  Degenerate pools yield whatever exists."""
    out: dict[str, list[str]] = {}
    for k, cat in enumerate(CATEGORIES):
        positives, high = [], []
        for s in dataset:
            vec = s.consolidated
            if vec is None and s.labels:
                vec = consolidate(s)
            if vec is not None and vec.values[k] is Label.POSITIVE:
                positives.append(s.id)
            if s.id in scores and float(scores[s.id][k]) > 0.5:
                high.append(s.id)
        rng = _rng(seed, k)
        chosen: list[str] = []
        for pool in (sorted(positives), sorted(high)):
            take = min(per_side, len(pool))
            picks = rng.choice(len(pool), size=take, replace=False) if take else []
            for i in picks:
                if pool[i] not in chosen:
                    chosen.append(pool[i])
        out[cat.value] = chosen
    return out


@dataclass
class CategoryAudit:
    tp: int
    fp: int
    fn: int
    tn: int
    f1: Optional[float]
    flagged: bool

    def as_obj(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn, "f1": self.f1, "flagged": self.flagged}


@dataclass
class AuditReport:
    categories: dict[str, CategoryAudit]
    sample_ids: list[str] = field(default_factory=list)
    disagreements: dict[str, list[str]] = field(default_factory=dict)

    def as_obj(self) -> dict:
        return {
            "categories": {c: a.as_obj() for c, a in self.categories.items()},
            "sample_ids": self.sample_ids,
            "disagreements": self.disagreements,
        }

    def write(self, path):
        with open(Path(path), "w", encoding="utf-8") as fh:
            json.dump(self.as_obj(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def audit_f1(
    annotator: Mapping[str, LabelVector],
    auditor: Mapping[str, LabelVector],
    flag_below: float = 0.6,
) -> AuditReport:
    """Per-category F-1 with auditor labels as ground truth.  A category the
    auditor left unlabeled on a sample is excluded for that sample; an
    annotator non-positive counts as a negative prediction.  F-1 with an
    empty denominator is reported as undefined, never as 0 or 1."""
    missing = sorted(set(annotator) - set(auditor))
    if missing:
        raise QualityError(f"no auditor record for ids: {missing}")
    categories: dict[str, CategoryAudit] = {}
    disagreements: dict[str, list[str]] = {}
    for k, cat in enumerate(CATEGORIES):
        tp = fp = fn = tn = 0
        bad: list[str] = []
        for sid in sorted(annotator):
            truth = auditor[sid].values[k]
            if truth is Label.UNLABELED:
                continue
            pred_pos = annotator[sid].values[k] is Label.POSITIVE
            true_pos = truth is Label.POSITIVE
            if pred_pos and true_pos:
                tp += 1
            elif pred_pos and not true_pos:
                fp += 1
            elif not pred_pos and true_pos:
                fn += 1
            else:
                tn += 1
            if pred_pos != true_pos:
                bad.append(sid)
        denom = 2 * tp + fp + fn
        f1 = (2 * tp / denom) if denom else None
        categories[cat.value] = CategoryAudit(
            tp=tp, fp=fp, fn=fn, tn=tn, f1=f1, flagged=(f1 is not None and f1 < flag_below)
        )
        if bad:
            disagreements[cat.value] = bad
    return AuditReport(categories=categories, sample_ids=sorted(annotator), disagreements=disagreements)


def crossval_flag(
    dataset: Dataset,
    train_cfg: TrainConfig,
    net_cfg: NetworkConfig,
    feat_cfg: FeaturizerConfig,
    seed: int,
    threshold: float = 0.5,
) -> set[str]:
    """Split in half by id, train a model per half, score the opposite half,
    and flag samples where any labeled category disagrees with the model at
    the decision threshold."""
    half_a, half_b = split_half(dataset, seed)
    flagged: set[str] = set()
    for train_half, score_half in ((half_a, half_b), (half_b, half_a)):
        ordered = train_half.subset(sorted(train_half.ids()))
        model = train(ordered, train_cfg, net_cfg, feat_cfg).model
        samples = sorted(score_half, key=lambda s: s.id)
        P = model.score_texts([s.text for s in samples])
        for i, s in enumerate(samples):
            vec = s.consolidated
            if vec is None and s.labels:
                vec = consolidate(s)
            if vec is None:
                continue
            for k, value in enumerate(vec.values):
                if value is Label.UNLABELED:
                    continue
                if (float(P[k, i]) >= threshold) != (value is Label.POSITIVE):
                    flagged.add(s.id)
                    break
    return flagged


@dataclass
class RelabelDecision:
    triggered: bool
    audited: list[str]
    mislabeled: list[str]
    queue: list[str]
    fraction: float

    def as_obj(self) -> dict:
        return {
            "triggered": self.triggered,
            "audited": self.audited,
            "mislabeled": self.mislabeled,
            "queue": self.queue,
            "fraction": self.fraction,
        }


def relabel_trigger(
    flagged: Sequence[str],
    dataset: Dataset,
    auditor: Oracle,
    seed: int,
    audit_fraction: float = 0.1,
    min_audit: int = 10,
    trigger_above: float = 0.30,
) -> RelabelDecision:
    """Audit a random slice of the flagged ids; past the trigger fraction
    (strictly) the whole flagged set goes back for relabeling, otherwise only
    the confirmed mislabels do."""
    if not flagged:
        raise QualityError("no flagged ids to audit")
    ids = sorted(flagged)
    take = min(len(ids), max(min_audit, math.ceil(audit_fraction * len(ids))))
    rng = _rng(seed, 17)
    picks = rng.choice(len(ids), size=take, replace=False)
    audited = sorted(ids[i] for i in picks)
    truth = auditor(audited)
    mislabeled: list[str] = []
    for sid in audited:
        sample = dataset.get(sid)
        vec = sample.consolidated
        if vec is None and sample.labels:
            vec = consolidate(sample)
        if vec is None:
            mislabeled.append(sid)
            continue
        expected = truth[sid]
        for k in range(len(CATEGORIES)):
            if expected.values[k] is Label.UNLABELED:
                continue
            if vec.values[k] is not expected.values[k]:
                mislabeled.append(sid)
                break
    fraction = len(mislabeled) / len(audited)
    triggered = fraction > trigger_above
    return RelabelDecision(
        triggered=triggered,
        audited=audited,
        mislabeled=mislabeled,
        queue=ids if triggered else mislabeled,
        fraction=fraction,
    )
