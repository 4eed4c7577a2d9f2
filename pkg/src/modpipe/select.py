"""Active-learning selection: three parallel pipelines (random sampling,
above-threshold sampling, uncertainty sampling), sqrt-of-bucket-size
metadata reweighting, and the iterative label-train-evaluate loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .corpus import Dataset, LabelRecord, Sample
from .evalx import EvalTable, evaluate
from .features import FeaturizerConfig
from .net import Model, NetworkConfig
from .taxonomy import CATEGORIES, LabelVector
from .train import TrainConfig, TrainResult, train


class SelectError(Exception):
    pass


class OracleError(SelectError):
    pass


STRATEGIES = ("random", "threshold", "uncertainty")

# Stable RNG sub-streams per concern, derived from one iteration seed.
_SUBSEED = {"random": 0, "threshold": 1, "uncertainty": 2, "reweight": 3}


def _rng(seed: int, concern: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(_SUBSEED[concern],)))


@dataclass(frozen=True)
class StrategyMix:
    random: float = 1.0 / 3.0
    threshold: float = 1.0 / 3.0
    uncertainty: float = 1.0 / 3.0
    tau: Union[float, Mapping[str, float]] = 0.5

    def __post_init__(self):
        fractions = (self.random, self.threshold, self.uncertainty)
        if any(f < 0 for f in fractions):
            raise SelectError("strategy fractions must be >= 0")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise SelectError(f"strategy fractions must sum to 1, got {sum(fractions)}")

    def tau_vector(self) -> np.ndarray:
        if isinstance(self.tau, Mapping):
            return np.array([float(self.tau.get(c.value, 0.5)) for c in CATEGORIES])
        return np.full(len(CATEGORIES), float(self.tau))


@dataclass
class SelectionEntry:
    sample_id: str
    strategy: str
    category: Optional[str]
    scores: dict[str, float]
    weight: float = 1.0

    def as_obj(self) -> dict:
        return {
            "id": self.sample_id,
            "strategy": self.strategy,
            "category": self.category,
            "scores": self.scores,
            "weight": self.weight,
        }


@dataclass
class SelectionBatch:
    entries: list[SelectionEntry] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def ids(self) -> list[str]:
        return [e.sample_id for e in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def as_obj(self) -> dict:
        return {"entries": [e.as_obj() for e in self.entries], "warnings": list(self.warnings)}


ScoreTable = dict[str, np.ndarray]


def score_pool(model: Model, pool: Dataset) -> ScoreTable:
    samples = list(pool)
    if not samples:
        return {}
    P = model.score_texts([s.text for s in samples])
    return {s.id: P[:, i].copy() for i, s in enumerate(samples)}


def select_random(pool_ids: Iterable[str], n: int, seed: int) -> list[str]:
    """Uniform sample without replacement; invariant to pool ordering."""
    ids = sorted(pool_ids)
    if n > len(ids):
        raise SelectError(f"requested {n} from a pool of {len(ids)}")
    if n == 0:
        return []
    rng = _rng(seed, "random")
    picks = rng.choice(len(ids), size=n, replace=False)
    return [ids[i] for i in picks]


@dataclass
class ThresholdSelection:
    ids: list[str]
    shortfall: int = 0


def select_threshold(
    pool_ids: Iterable[str],
    scores: ScoreTable,
    tau: Union[float, np.ndarray],
    n: int,
    seed: int,
) -> ThresholdSelection:
    """Uniform sample from the candidates scoring above τ in any category.
    Returns everything it has (with the shortfall noted) when candidates
    run short."""
    ids = sorted(pool_ids)
    tau_vec = np.asarray(tau) if np.ndim(tau) else np.full(len(CATEGORIES), float(tau))
    candidates = [i for i in ids if np.any(scores[i] > tau_vec)]
    if len(candidates) <= n:
        return ThresholdSelection(ids=candidates, shortfall=n - len(candidates))
    rng = _rng(seed, "threshold")
    picks = rng.choice(len(candidates), size=n, replace=False)
    return ThresholdSelection(ids=[candidates[i] for i in picks])


def select_uncertainty(pool_ids: Iterable[str], scores: ScoreTable, n: int) -> list[str]:
    """The n samples whose closest-to-0.5 category score is closest to 0.5;
    deterministic, ties broken by id."""
    ids = sorted(pool_ids)
    keyed = sorted(ids, key=lambda i: (float(np.min(np.abs(scores[i] - 0.5))), i))
    return keyed[:n]


def metadata_reweight(
    candidates: Sequence[str],
    dataset: Dataset,
    key: str,
    n: int,
    seed: int,
) -> list[str]:
    """Draw n candidates without replacement: buckets by metadata value,
    bucket picked with probability proportional to sqrt of its remaining
    size, item uniform within the bucket."""
    if n > len(candidates):
        raise SelectError(f"requested {n} from {len(candidates)} candidates")
    buckets: dict[str, list[str]] = {}
    for sid in sorted(candidates):
        sample = dataset.get(sid)
        if key not in sample.metadata:
            raise SelectError(f"sample {sid!r} lacks metadata key {key!r}")
        buckets.setdefault(sample.metadata[key], []).append(sid)
    names = sorted(buckets)
    rng = _rng(seed, "reweight")
    out: list[str] = []
    for _ in range(n):
        weights = np.array([math.sqrt(len(buckets[b])) if buckets[b] else 0.0 for b in names])
        probs = weights / weights.sum()
        b = names[rng.choice(len(names), p=probs)]
        item = buckets[b].pop(int(rng.integers(len(buckets[b]))))
        out.append(item)
    return out


@dataclass(frozen=True)
class LoopConfig:
    seed_size: int = 6000
    iterations: int = 3
    pool_size: int = 50_000
    batch_size: int = 2000
    reweight_key: Optional[str] = None
    oversample: int = 3  # candidate multiple nominated per pipeline before reweighting

    def __post_init__(self):
        if self.seed_size < 1 or self.iterations < 0 or self.pool_size < 1 or self.batch_size < 1:
            raise SelectError("loop sizes must be positive")

    @classmethod
    def from_obj(cls, obj: dict) -> "LoopConfig":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in obj.items() if k in known})


Oracle = Callable[[Sequence[str]], dict[str, LabelVector]]


class DatasetOracle:
    """Simulated annotator: answers label requests from a held-out truth
    table, optionally flipping each category with a noise rate."""

    def __init__(self, truth: Mapping[str, LabelVector], flip_rate: float = 0.0, seed: int = 0):
        self.truth = dict(truth)
        self.flip_rate = flip_rate
        self._rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(9,)))

    def __call__(self, ids: Sequence[str]) -> dict[str, LabelVector]:
        out: dict[str, LabelVector] = {}
        for sid in ids:
            if sid not in self.truth:
                raise OracleError(f"oracle has no label for sample {sid!r}")
            vec = self.truth[sid]
            if self.flip_rate > 0.0:
                flips = self._rng.random(len(CATEGORIES)) < self.flip_rate
                for k, flip in enumerate(flips):
                    value = vec.values[k]
                    if flip and value.value != "unlabeled":
                        vec = vec.replace(CATEGORIES[k], "negative" if value.value == "positive" else "positive")
            out[sid] = vec
        return out


def allocate(n: int, mix: StrategyMix) -> dict[str, int]:
    """Largest-remainder split of n across the three strategies."""
    fractions = {"random": mix.random, "threshold": mix.threshold, "uncertainty": mix.uncertainty}
    floors = {s: int(math.floor(n * f)) for s, f in fractions.items()}
    remainder = n - sum(floors.values())
    by_frac = sorted(STRATEGIES, key=lambda s: (floors[s] - n * fractions[s], STRATEGIES.index(s)))
    for s in by_frac[:remainder]:
        floors[s] += 1
    return floors


def select_batch(
    pool: Dataset,
    scores: ScoreTable,
    mix: StrategyMix,
    n: int,
    seed: int,
    reweight_key: Optional[str] = None,
    oversample: int = 3,
) -> SelectionBatch:
    """Run the three pipelines, pool their nominations, optionally reweight
    by metadata, and return a deduplicated batch of (at most) n ids."""
    batch = SelectionBatch()
    pool_ids = pool.ids()
    n = min(n, len(pool_ids))
    quota = allocate(n, mix)
    factor = max(1, oversample) if reweight_key else 1
    tau_vec = mix.tau_vector()

    nominated: dict[str, SelectionEntry] = {}

    def nominate(ids: Iterable[str], strategy: str):
        for sid in ids:
            if sid in nominated:
                continue
            vec = scores[sid]
            category = None
            if strategy == "threshold":
                over = np.flatnonzero(vec > tau_vec)
                if over.size:
                    category = CATEGORIES[over[np.argmax(vec[over])]].value
            elif strategy == "uncertainty":
                category = CATEGORIES[int(np.argmin(np.abs(vec - 0.5)))].value
            nominated[sid] = SelectionEntry(
                sample_id=sid,
                strategy=strategy,
                category=category,
                scores={c.value: float(vec[k]) for k, c in enumerate(CATEGORIES)},
            )

    if quota["threshold"]:
        want = min(quota["threshold"] * factor, len(pool_ids))
        picked = select_threshold(pool_ids, scores, tau_vec, want, seed)
        nominate(picked.ids, "threshold")
        if picked.shortfall and not reweight_key:
            batch.warnings.append(
                f"threshold pipeline found {len(picked.ids)} candidates for {want} requested"
            )
    if quota["uncertainty"]:
        want = min(quota["uncertainty"] * factor, len(pool_ids))
        remaining = [i for i in pool_ids if i not in nominated]
        nominate(select_uncertainty(remaining, scores, min(want, len(remaining))), "uncertainty")
    if quota["random"]:
        want = min(quota["random"] * factor, len(pool_ids))
        remaining = [i for i in pool_ids if i not in nominated]
        nominate(select_random(remaining, min(want, len(remaining)), seed), "random")

    if reweight_key:
        candidates = list(nominated)
        take = min(n, len(candidates))
        bucket_sizes: dict[str, int] = {}
        for sid in candidates:
            value = pool.get(sid).metadata.get(reweight_key)
            if value is None:
                raise SelectError(f"sample {sid!r} lacks metadata key {reweight_key!r}")
            bucket_sizes[value] = bucket_sizes.get(value, 0) + 1
        norm = sum(math.sqrt(c) for c in bucket_sizes.values())
        chosen = metadata_reweight(candidates, pool, reweight_key, take, seed)
        for sid in chosen:
            entry = nominated[sid]
            entry.weight = math.sqrt(bucket_sizes[pool.get(sid).metadata[reweight_key]]) / norm
            batch.entries.append(entry)
    else:
        batch.entries.extend(nominated.values())

    # Backfill with untried random picks when the pipelines came up short.
    if len(batch.entries) < n:
        have = {e.sample_id for e in batch.entries}
        spare = [i for i in pool_ids if i not in have]
        filler = select_random(spare, min(n - len(batch.entries), len(spare)), seed + 1)
        for sid in filler:
            vec = scores[sid]
            batch.entries.append(
                SelectionEntry(
                    sample_id=sid,
                    strategy="random",
                    category=None,
                    scores={c.value: float(vec[k]) for k, c in enumerate(CATEGORIES)},
                )
            )
        if filler:
            batch.warnings.append(f"backfilled {len(filler)} samples from the random pipeline")
    return batch


def run_iteration(
    model: Model,
    pool: Dataset,
    mix: StrategyMix,
    loop_cfg: LoopConfig,
    oracle: Oracle,
    training_set: Dataset,
    seed: int,
    timestamp: int = 0,
) -> tuple[SelectionBatch, Dataset]:
    """Score the pool, select a batch, label it via the oracle, and return
    the batch plus an extended copy of the training set.  Oracle failure
    leaves the training set untouched."""
    scores = score_pool(model, pool)
    candidates = [sid for sid in pool.ids() if sid not in training_set]
    batch = select_batch(
        pool.subset(candidates, name=pool.name),
        scores,
        mix,
        min(loop_cfg.batch_size, len(candidates)),
        seed,
        reweight_key=loop_cfg.reweight_key,
        oversample=loop_cfg.oversample,
    )
    labels = oracle(batch.ids())
    missing = [sid for sid in batch.ids() if sid not in labels]
    if missing:
        raise OracleError(f"oracle returned no labels for {missing}")
    extended = Dataset(training_set.name, training_set)
    for entry in batch.entries:
        original = pool.get(entry.sample_id)
        vector = labels[entry.sample_id]
        record = LabelRecord(annotator_id="oracle", role="oracle", vector=vector, timestamp=timestamp)
        extended.add(
            Sample(
                id=original.id,
                text=original.text,
                domain=original.domain,
                metadata={**original.metadata, "strategy": entry.strategy},
                labels=[record],
                consolidated=vector,
            )
        )
    return batch, extended


@dataclass
class LoopResult:
    models: list[Model]
    tables: list[EvalTable]
    batches: list[SelectionBatch]
    reports: list
    sizes: list[int] = field(default_factory=list)

    def metrics_rows(self) -> list[dict]:
        return [
            {
                "iteration": i,
                "train_size": self.sizes[i] if i < len(self.sizes) else None,
                **{c: ce.auprc for c, ce in t.categories.items()},
            }
            for i, t in enumerate(self.tables)
        ]


def run_loop(
    initial_set: Dataset,
    pools: Union[Sequence[Dataset], Callable[[int], Dataset]],
    mix: StrategyMix,
    loop_cfg: LoopConfig,
    train_cfg: TrainConfig,
    net_cfg: NetworkConfig,
    feat_cfg: FeaturizerConfig,
    oracle: Oracle,
    validation: Dataset,
    seed: int = 0,
) -> LoopResult:
    """The iterative protocol: train, evaluate, then for each iteration score
    a fresh pool, select and label a batch, extend the training set, retrain,
    and re-evaluate.  Produces exactly iterations+1 models and eval rows."""
    current = initial_set
    result = LoopResult(models=[], tables=[], batches=[], reports=[])
    outcome: TrainResult = train(current, train_cfg, net_cfg, feat_cfg, validation=validation)
    result.models.append(outcome.model)
    result.reports.append(outcome.report)
    result.tables.append(evaluate(outcome.model, validation))
    result.sizes.append(len(current))
    for i in range(loop_cfg.iterations):
        pool = pools(i) if callable(pools) else pools[i]
        batch, current = run_iteration(
            outcome.model, pool, mix, loop_cfg, oracle, current, seed=seed + i, timestamp=i + 1
        )
        result.batches.append(batch)
        outcome = train(current, train_cfg, net_cfg, feat_cfg, validation=validation)
        result.models.append(outcome.model)
        result.reports.append(outcome.report)
        result.tables.append(evaluate(outcome.model, validation))
        result.sizes.append(len(current))
    return result
