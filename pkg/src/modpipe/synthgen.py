"""Deterministic synthetic data: template expansion over named slots and the
counterfactual identity/object dataset.

No language model sits in the loop: the filled template text is the sample.
A generator hook (filled text -> continuation) exists so one can be plugged
in later; the default generator is the identity.
"""

from __future__ import annotations

import itertools
import json
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .corpus import LabelRecord, Sample
from .taxonomy import LabelVector, normalize


class SynthError(Exception):
    pass


Generator = Callable[[str], str]


def identity_generator(text: str) -> str:
    return text


@dataclass(frozen=True)
class Template:
    id: str
    body: str
    slots: dict[str, tuple[str, ...]]
    label_rule: dict

    def __post_init__(self):
        names = {name for _, name, _, _ in string.Formatter().parse(self.body) if name}
        for name in names:
            fillers = self.slots.get(name)
            if not fillers:
                raise SynthError(f"template {self.id!r}: slot {name!r} has no fillers")
        unknown = set(self.slots) - names
        if unknown:
            raise SynthError(f"template {self.id!r}: slots {sorted(unknown)} not present in body")
        _validate_rule(self.label_rule, self.slots)

    @classmethod
    def from_obj(cls, obj: dict) -> "Template":
        return cls(
            id=str(obj["id"]),
            body=str(obj["body"]),
            slots={str(k): tuple(str(f) for f in v) for k, v in obj["slots"].items()},
            label_rule=obj["label_rule"],
        )

    def slot_names(self) -> list[str]:
        return list(self.slots)

    def combinations(self) -> int:
        total = 1
        for fillers in self.slots.values():
            total *= len(fillers)
        return total


def _validate_rule(rule: dict, slots: Mapping[str, Sequence[str]]):
    kind = rule.get("type")
    if kind == "fixed":
        if "vector" not in rule:
            raise SynthError("fixed label rule needs a 'vector'")
        normalize(rule["vector"])
    elif kind == "slot_map":
        slot = rule.get("slot")
        if slot not in slots:
            raise SynthError(f"slot_map rule references unknown slot {slot!r}")
        mapping = rule.get("map", {})
        missing = [f for f in slots[slot] if f not in mapping]
        if missing:
            raise SynthError(f"slot_map rule does not cover fillers: {missing}")
        for vec in mapping.values():
            normalize(vec)
    else:
        raise SynthError(f"unknown label rule type {kind!r}")


def rule_vector(rule: dict, assignment: Mapping[str, str]) -> LabelVector:
    if rule["type"] == "fixed":
        return normalize(rule["vector"])
    return normalize(rule["map"][assignment[rule["slot"]]])


def load_templates(path) -> list[Template]:
    with open(Path(path), encoding="utf-8") as fh:
        doc = json.load(fh)
    entries = doc["templates"] if isinstance(doc, dict) else doc
    return [Template.from_obj(obj) for obj in entries]


def _decode(index: int, template: Template) -> dict[str, str]:
    assignment = {}
    for name in reversed(template.slot_names()):
        fillers = template.slots[name]
        assignment[name] = fillers[index % len(fillers)]
        index //= len(fillers)
    return assignment


def expand_template(
    template: Template,
    count: int,
    seed: int,
    replace: bool = False,
    generator: Generator = identity_generator,
) -> list[Sample]:
    """Seeded uniform draws over the slot combinations; without replacement
    each drawn combination appears exactly once."""
    total = template.combinations()
    if count > total and not replace:
        raise SynthError(f"template {template.id!r} has {total} combinations, requested {count}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(5,)))
    if replace:
        draws = rng.integers(total, size=count)
    else:
        draws = rng.choice(total, size=count, replace=False)
    samples = []
    for draw in draws:
        assignment = _decode(int(draw), template)
        text = generator(template.body.format(**assignment))
        vector = rule_vector(template.label_rule, assignment)
        metadata = {"origin": "synthgen", "template_id": template.id}
        for name, value in assignment.items():
            metadata[f"slot_{name}"] = value
        samples.append(
            Sample(
                id=f"{template.id}-{int(draw):06d}",
                text=text,
                domain="synthetic",
                metadata=metadata,
                labels=[LabelRecord(annotator_id="synthgen", role="oracle", vector=vector, timestamp=0)],
                consolidated=vector,
            )
        )
    return samples


def build_counterfactual(
    identities: Sequence[str],
    objects: Sequence[str],
    predicates: Sequence[str],
    generator: Generator = identity_generator,
) -> list[Sample]:
    """Cartesian "{subject} {predicate}" sentences: identity subjects are
    hate-positive, object subjects are negative across the board, balanced
    per predicate."""
    if not identities or not objects or not predicates:
        raise SynthError("identity, object, and predicate lists must be non-empty")
    positive = normalize(LabelVector.all_negative().replace("H", "positive"))
    negative = LabelVector.all_negative()
    samples = []
    counter = itertools.count()
    for predicate in predicates:
        for subject, vector, kind in [(s, positive, "identity") for s in identities] + [
            (s, negative, "object") for s in objects
        ]:
            text = generator(f"{subject} {predicate}")
            samples.append(
                Sample(
                    id=f"cf-{next(counter):06d}",
                    text=text,
                    domain="synthetic",
                    metadata={
                        "origin": "counterfactual",
                        "subject": subject,
                        "subject_kind": kind,
                        "predicate": predicate,
                    },
                    labels=[LabelRecord(annotator_id="synthgen", role="oracle", vector=vector, timestamp=0)],
                    consolidated=vector,
                )
            )
    return samples
