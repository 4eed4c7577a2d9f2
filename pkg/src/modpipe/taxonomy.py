"""Label taxonomy: eight moderation categories, ternary label vectors, and
score mapping from external classifier taxonomies.

Three of the eight categories are severe subtypes of a top-level category
(S3 under S, H2 under H, V2 under V).  Label vectors keep an explicit
"unlabeled" state per category so partially audited records stay honest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping


class TaxonomyError(Exception):
    """Base class for taxonomy failures."""


class UnknownCategoryError(TaxonomyError):
    pass


class MappingError(TaxonomyError):
    pass


class Category(str, Enum):
    S = "S"
    H = "H"
    V = "V"
    HR = "HR"
    SH = "SH"
    S3 = "S3"
    H2 = "H2"
    V2 = "V2"


# Fixed presentation/order contract used everywhere (wire formats, arrays, tables).
CATEGORIES: tuple[Category, ...] = (
    Category.S,
    Category.H,
    Category.V,
    Category.HR,
    Category.SH,
    Category.S3,
    Category.H2,
    Category.V2,
)

PARENT: dict[Category, Category] = {
    Category.S3: Category.S,
    Category.H2: Category.H,
    Category.V2: Category.V,
}

CHILDREN: dict[Category, tuple[Category, ...]] = {
    Category.S: (Category.S3,),
    Category.H: (Category.H2,),
    Category.V: (Category.V2,),
}


class Label(str, Enum):
    POSITIVE = "positive"
    NEGATIVE = "negative"
    UNLABELED = "unlabeled"


def parse_category(value) -> Category:
    if isinstance(value, Category):
        return value
    try:
        return Category(str(value))
    except ValueError:
        raise UnknownCategoryError(f"unknown category identifier: {value!r}") from None


def parse_label(value) -> Label:
    if isinstance(value, Label):
        return value
    try:
        return Label(str(value))
    except ValueError:
        raise TaxonomyError(f"unknown label value: {value!r}") from None


@dataclass(frozen=True)
class LabelVector:
    """Immutable per-category assignment over the eight categories."""

    values: tuple[Label, ...]

    def __post_init__(self):
        if len(self.values) != len(CATEGORIES):
            raise TaxonomyError(f"label vector needs {len(CATEGORIES)} entries, got {len(self.values)}")

    @classmethod
    def from_mapping(cls, raw: Mapping) -> "LabelVector":
        vals = {c: Label.UNLABELED for c in CATEGORIES}
        for key, value in raw.items():
            vals[parse_category(key)] = parse_label(value)
        return cls(tuple(vals[c] for c in CATEGORIES))

    @classmethod
    def all_negative(cls) -> "LabelVector":
        return cls(tuple(Label.NEGATIVE for _ in CATEGORIES))

    @classmethod
    def unlabeled(cls) -> "LabelVector":
        return cls(tuple(Label.UNLABELED for _ in CATEGORIES))

    def __getitem__(self, category) -> Label:
        return self.values[CATEGORIES.index(parse_category(category))]

    def labeled(self) -> tuple[Category, ...]:
        return tuple(c for c, v in zip(CATEGORIES, self.values) if v is not Label.UNLABELED)

    def positives(self) -> tuple[Category, ...]:
        return tuple(c for c, v in zip(CATEGORIES, self.values) if v is Label.POSITIVE)

    def replace(self, category, label) -> "LabelVector":
        idx = CATEGORIES.index(parse_category(category))
        vals = list(self.values)
        vals[idx] = parse_label(label)
        return LabelVector(tuple(vals))

    def as_dict(self) -> dict[str, str]:
        """Wire form: unlabeled categories are omitted."""
        return {c.value: v.value for c, v in zip(CATEGORIES, self.values) if v is not Label.UNLABELED}


def normalize_with_notes(raw) -> tuple[LabelVector, list[str]]:
    """Normalize a raw per-category assignment and report any conflict repairs.

    Rules, in order: a positive subcategory forces its parent positive (an
    explicitly negative parent gets promoted, with a note, since the severe
    subtype dominates); then a negative parent turns unlabeled subcategories
    negative.
    """
    if isinstance(raw, LabelVector):
        vals = {c: v for c, v in zip(CATEGORIES, raw.values)}
    else:
        vals = {c: Label.UNLABELED for c in CATEGORIES}
        for key, value in raw.items():
            vals[parse_category(key)] = parse_label(value)

    notes: list[str] = []
    for sub, parent in PARENT.items():
        if vals[sub] is Label.POSITIVE and vals[parent] is not Label.POSITIVE:
            if vals[parent] is Label.NEGATIVE:
                notes.append(f"{parent.value} promoted to positive: subcategory {sub.value} is positive")
            vals[parent] = Label.POSITIVE
    for sub, parent in PARENT.items():
        if vals[parent] is Label.NEGATIVE and vals[sub] is Label.UNLABELED:
            vals[sub] = Label.NEGATIVE
    return LabelVector(tuple(vals[c] for c in CATEGORIES)), notes


def normalize(raw) -> LabelVector:
    """Normalize a raw per-category assignment into a consistent LabelVector."""
    vector, _ = normalize_with_notes(raw)
    return vector


def is_undesired(vector: LabelVector) -> bool:
    """True iff the vector triggers at least one category."""
    return any(v is Label.POSITIVE for v in vector.values)


@dataclass(frozen=True)
class MappingRule:
    category: Category
    max_of: tuple[str, ...]

    def __post_init__(self):
        if not self.max_of:
            raise MappingError(f"mapping for {self.category.value} has an empty field set")


@dataclass(frozen=True)
class TaxonomyMapping:
    """Maps named external score fields onto categories by max-aggregation."""

    rules: tuple[MappingRule, ...]

    @classmethod
    def from_obj(cls, obj: Iterable[Mapping]) -> "TaxonomyMapping":
        rules = []
        for entry in obj:
            category = parse_category(entry["category"])
            fields = tuple(str(f) for f in entry["max_of"])
            rules.append(MappingRule(category, fields))
        return cls(tuple(rules))

    @classmethod
    def from_json(cls, path) -> "TaxonomyMapping":
        with open(Path(path), encoding="utf-8") as fh:
            return cls.from_obj(json.load(fh))

    def fields(self) -> tuple[str, ...]:
        seen: dict[str, None] = {}
        for rule in self.rules:
            for f in rule.max_of:
                seen.setdefault(f)
        return tuple(seen)


def map_external(scores: Mapping[str, float], mapping: TaxonomyMapping) -> dict[Category, float]:
    """Aggregate external score fields onto categories (max over mapped fields).

    Categories without a rule are absent from the output.
    """
    out: dict[Category, float] = {}
    for rule in mapping.rules:
        missing = [f for f in rule.max_of if f not in scores]
        if missing:
            raise MappingError(f"missing score field(s) {missing} for category {rule.category.value}")
        out[rule.category] = max(float(scores[f]) for f in rule.max_of)
    return out
