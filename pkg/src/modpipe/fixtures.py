"""Deterministic desk-scale fixture worlds.

Texts are filler words with mechanical per-category marker tokens planted in
them; a sample's true label is fully determined by which markers it carries.
That makes ground truth recomputable, keeps simulated annotators honest, and
gives models something genuinely learnable at toy sizes.
"""

from __future__ import annotations

from typing import Optional, Union

import numpy as np

from .corpus import Dataset, LabelRecord, Sample
from .taxonomy import CATEGORIES, Category, LabelVector, normalize

# Stand-ins for unsafe content, one per category.  Deliberately fake words:
# distinct from every filler and from each other.
MARKERS: dict[Category, str] = {
    Category.S: "zzadult",
    Category.H: "zzslur",
    Category.V: "zzgore",
    Category.HR: "zzbully",
    Category.SH: "zzselfcut",
    Category.S3: "zzminor",
    Category.H2: "zzthreat",
    Category.V2: "zzmaim",
}

FILLERS = (
    "report window coffee garden music paper bottle street cloud market "
    "dinner bridge yellow quiet planet cousin ticket summer pencil river "
    "shadow basket copper engine flower guitar helmet island jacket kitten "
    "ladder magnet needle orange puzzle rabbit saddle tunnel velvet wagon "
    "anchor button candle dolphin eleven forest grape hammer ivory jungle "
    "kettle lantern mirror nutmeg ocean parrot quartz ribbon sponge turnip"
).split()

CHANNELS = ("forum", "chat", "review")


def truth_from_tokens(tokens: list[str]) -> LabelVector:
    present = set(tokens)
    return normalize({cat: ("positive" if MARKERS[cat] in present else "negative") for cat in CATEGORIES})


def _text(rng: np.random.Generator, markers: list[str], length: tuple[int, int] = (6, 14)) -> list[str]:
    n = int(rng.integers(length[0], length[1] + 1))
    tokens = [FILLERS[i] for i in rng.integers(len(FILLERS), size=n)]
    for marker in markers:
        pos = int(rng.integers(len(tokens) + 1))
        tokens.insert(pos, marker)
    return tokens


def make_pool(
    n: int,
    seed: int,
    rates: Union[float, dict[Category, float]] = 0.05,
    domain: str = "source",
    id_prefix: str = "p",
) -> tuple[Dataset, dict[str, LabelVector]]:
    """Unlabeled pool plus its hidden ground truth."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(21,)))
    if not isinstance(rates, dict):
        rates = {cat: float(rates) for cat in CATEGORIES}
    ds = Dataset(name=f"{id_prefix}-pool")
    truth: dict[str, LabelVector] = {}
    for i in range(n):
        markers = [MARKERS[cat] for cat in CATEGORIES if rng.random() < rates.get(cat, 0.0)]
        tokens = _text(rng, markers)
        sid = f"{id_prefix}{i:06d}"
        ds.add(
            Sample(
                id=sid,
                text=" ".join(tokens),
                domain=domain,
                metadata={"origin": "fixture", "channel": CHANNELS[int(rng.integers(len(CHANNELS)))]},
            )
        )
        truth[sid] = truth_from_tokens(tokens)
    return ds, truth


def attach_labels(
    pool: Dataset,
    truth: dict[str, LabelVector],
    annotator_id: str = "fixture",
    role: str = "oracle",
    timestamp: int = 1,
) -> Dataset:
    """Labeled copy of a pool, with each sample's truth as one record."""
    out = Dataset(name=pool.name)
    for s in pool:
        vec = truth[s.id]
        out.add(
            Sample(
                id=s.id,
                text=s.text,
                domain=s.domain,
                metadata=dict(s.metadata),
                labels=[LabelRecord(annotator_id=annotator_id, role=role, vector=vec, timestamp=timestamp)],
                consolidated=vec,
            )
        )
    return out


def make_labeled(
    n: int,
    seed: int,
    rates: Union[float, dict[Category, float]] = 0.05,
    domain: str = "source",
    id_prefix: str = "d",
) -> tuple[Dataset, dict[str, LabelVector]]:
    pool, truth = make_pool(n, seed, rates, domain, id_prefix)
    return attach_labels(pool, truth), truth


def flip_labels(ds: Dataset, fraction: float, seed: int) -> tuple[Dataset, set[str]]:
    """Corrupt a labeled dataset: for the chosen fraction of samples, toggle
    one random category and store the corrupted vector."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(22,)))
    ids = sorted(ds.ids())
    n_flip = int(round(fraction * len(ids)))
    flipped = set(str(ids[i]) for i in rng.choice(len(ids), size=n_flip, replace=False))
    out = Dataset(name=f"{ds.name}/flipped")
    for s in ds:
        vec = s.consolidated
        if s.id in flipped:
            k = int(rng.integers(len(CATEGORIES)))
            value = vec.values[k]
            toggled = "negative" if value.value == "positive" else "positive"
            vec = normalize(vec.replace(CATEGORIES[k], toggled))
        out.add(
            Sample(
                id=s.id,
                text=s.text,
                domain=s.domain,
                metadata=dict(s.metadata),
                labels=[LabelRecord(annotator_id="fixture", role="oracle", vector=vec, timestamp=1)],
                consolidated=vec,
            )
        )
    return out, flipped


# Two-domain world for adversarial-training runs.  Four categories carry a
# transferable signal token; the source domain stamps one shared house-style
# cue on every positive, while in the target domain that same cue appears only
# on negatives.  A model leaning on the cue collapses on the target; one that
# relies on the signals transfers.  The cue is deliberately shared across
# categories so it marks the domain rather than any one label.
SHIFT_CATS = (Category.S, Category.H, Category.V, Category.HR)
SIGNALS = {Category.S: "gensig", Category.H: "hatsig", Category.V: "viosig", Category.HR: "harsig"}
SHORTCUTS = {c: "domcue" for c in SHIFT_CATS}
SIGNAL_NOISE = 0.12  # chance a negative carries some category's signal token
TARGET_CUE_RATE = 0.5  # chance a target negative carries some shortcut token


def _shift_truth(cat: Optional[Category]) -> LabelVector:
    raw = {c: "negative" for c in CATEGORIES}
    if cat is not None:
        raw[cat] = "positive"
    return normalize(raw)


def make_shift_pool(
    n: int,
    seed: int,
    domain: str,
    positive_rate: float = 0.5,
    id_prefix: str = "s",
) -> tuple[Dataset, dict[str, LabelVector]]:
    """One domain of the two-domain world; domain is 'source' or 'target'."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(23,)))
    ds = Dataset(name=f"{id_prefix}-{domain}")
    truth: dict[str, LabelVector] = {}
    for i in range(n):
        markers: list[str] = []
        cat: Optional[Category] = None
        if rng.random() < positive_rate:
            cat = SHIFT_CATS[int(rng.integers(len(SHIFT_CATS)))]
            markers.append(SIGNALS[cat])
            if domain == "source":
                markers.append(SHORTCUTS[cat])
        else:
            if rng.random() < SIGNAL_NOISE:
                noisy = SHIFT_CATS[int(rng.integers(len(SHIFT_CATS)))]
                markers.append(SIGNALS[noisy])
            if domain == "target" and rng.random() < TARGET_CUE_RATE:
                markers.append(SHORTCUTS[SHIFT_CATS[int(rng.integers(len(SHIFT_CATS)))]])
        tokens = _text(rng, markers, length=(5, 9))
        sid = f"{id_prefix}{domain[0]}{i:06d}"
        ds.add(Sample(id=sid, text=" ".join(tokens), domain=domain, metadata={"origin": "shift"}))
        truth[sid] = _shift_truth(cat)
    return ds, truth


def make_planted_pool(
    n: int,
    seed: int,
    keyword: str = "zzslur",
    category: Category = Category.H,
    positive_rate: float = 0.5,
    id_prefix: str = "k",
) -> tuple[Dataset, dict[str, LabelVector]]:
    """Single-keyword world: the keyword alone decides one category."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(24,)))
    ds = Dataset(name=f"{id_prefix}-planted")
    truth: dict[str, LabelVector] = {}
    for i in range(n):
        positive = rng.random() < positive_rate
        tokens = _text(rng, [keyword] if positive else [])
        sid = f"{id_prefix}{i:06d}"
        ds.add(Sample(id=sid, text=" ".join(tokens), domain="source", metadata={"origin": "planted"}))
        truth[sid] = _shift_truth(category if positive else None)
    return ds, truth
