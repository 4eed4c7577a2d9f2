import json

import pytest
from hypothesis import given, strategies as st

from modpipe.taxonomy import (
    CATEGORIES,
    Category,
    TaxonomyError,
    Label,
    LabelVector,
    MappingError,
    PARENT,
    TaxonomyMapping,
    UnknownCategoryError,
    is_undesired,
    map_external,
    normalize,
    normalize_with_notes,
    parse_category,
    parse_label,
)

LABEL_VALUES = ("positive", "negative", "unlabeled")


def raw_strategy():
    return st.dictionaries(
        st.sampled_from([c.value for c in CATEGORIES]),
        st.sampled_from(LABEL_VALUES),
    )


def test_category_order_is_fixed():
    assert tuple(c.value for c in CATEGORIES) == ("S", "H", "V", "HR", "SH", "S3", "H2", "V2")


def test_parent_map():
    assert PARENT[Category.S3] is Category.S
    assert PARENT[Category.H2] is Category.H
    assert PARENT[Category.V2] is Category.V
    assert Category.HR not in PARENT and Category.SH not in PARENT


def test_parse_category_rejects_unknown():
    assert parse_category("S3") is Category.S3
    assert parse_category(Category.H) is Category.H
    with pytest.raises(UnknownCategoryError):
        parse_category("X9")


def test_parse_label_values():
    assert parse_label("positive") is Label.POSITIVE
    assert parse_label("negative") is Label.NEGATIVE
    assert parse_label("unlabeled") is Label.UNLABELED
    with pytest.raises(TaxonomyError):
        parse_label("maybe")


def test_positive_subcategory_forces_parent_positive():
    vec = normalize({"S3": "positive"})
    assert vec["S"] is Label.POSITIVE
    assert vec["S3"] is Label.POSITIVE


def test_negative_parent_fills_unlabeled_subcategories():
    vec = normalize({"S": "negative"})
    assert vec["S3"] is Label.NEGATIVE


def test_negative_parent_with_positive_child_promotes_parent():
    vec, notes = normalize_with_notes({"H": "negative", "H2": "positive"})
    assert vec["H"] is Label.POSITIVE
    assert notes and "H" in notes[0]


def test_explicit_child_label_survives_negative_parent():
    vec = normalize({"V": "negative", "V2": "negative"})
    assert vec["V2"] is Label.NEGATIVE
    assert vec["V"] is Label.NEGATIVE


def test_wire_form_omits_unlabeled():
    vec = normalize({"S": "positive", "H": "negative"})
    obj = vec.as_dict()
    assert obj == {"S": "positive", "H": "negative", "H2": "negative"}
    assert LabelVector.from_mapping(obj) == vec


def test_is_undesired():
    assert is_undesired(normalize({"V2": "positive"}))
    assert not is_undesired(normalize({"S": "negative"}))
    assert not is_undesired(LabelVector.unlabeled())


@given(raw_strategy())
def test_normalize_is_idempotent(raw):
    once = normalize(raw)
    assert normalize(once) == once


@given(raw_strategy())
def test_normalized_vectors_are_consistent(raw):
    vec = normalize(raw)
    for child, parent in PARENT.items():
        if vec[child.value] is Label.POSITIVE:
            assert vec[parent.value] is Label.POSITIVE
        if vec[parent.value] is Label.NEGATIVE:
            assert vec[child.value] is not Label.UNLABELED


@given(raw_strategy())
def test_normalize_never_invents_positives_without_cause(raw):
    vec = normalize(raw)
    for cat in CATEGORIES:
        if vec[cat.value] is Label.POSITIVE:
            explicit = raw.get(cat.value) == "positive"
            child_forced = any(
                raw.get(child.value) == "positive"
                for child, parent in PARENT.items()
                if parent is cat
            )
            assert explicit or child_forced


def test_mapping_max_aggregation():
    mapping = TaxonomyMapping.from_obj(
        [
            {"category": "S", "max_of": ["sexually_explicit", "profanity", "flirtation"]},
            {"category": "H", "max_of": ["identity_attack"]},
        ]
    )
    scores = map_external(
        {"sexually_explicit": 0.9, "profanity": 0.2, "flirtation": 0.1, "identity_attack": 0.4},
        mapping,
    )
    assert scores[Category.S] == pytest.approx(0.9)
    assert scores[Category.H] == pytest.approx(0.4)
    assert Category.V not in scores


def test_mapping_all_zero_fields():
    mapping = TaxonomyMapping.from_obj([{"category": "S", "max_of": ["a", "b"]}])
    assert map_external({"a": 0.0, "b": 0.0}, mapping)[Category.S] == 0.0


def test_mapping_missing_field_names_it():
    mapping = TaxonomyMapping.from_obj([{"category": "V", "max_of": ["violence", "graphic"]}])
    with pytest.raises(MappingError, match="graphic"):
        map_external({"violence": 0.5}, mapping)


def test_mapping_loads_from_json_file(tmp_path):
    path = tmp_path / "mapping.json"
    path.write_text(json.dumps([{"category": "S", "max_of": ["sexual"]}]))
    mapping = TaxonomyMapping.from_json(path)
    assert mapping.fields() == ("sexual",)
    assert map_external({"sexual": 0.7}, mapping)[Category.S] == pytest.approx(0.7)


def test_empty_max_of_rejected():
    with pytest.raises(MappingError):
        TaxonomyMapping.from_obj([{"category": "S", "max_of": []}])


@given(
    st.dictionaries(st.sampled_from(["a", "b", "c"]), st.floats(0, 1), min_size=3),
    st.sampled_from(["a", "b", "c"]),
    st.floats(0, 1),
)
def test_map_external_is_monotone(scores, field, bump):
    mapping = TaxonomyMapping.from_obj([{"category": "H", "max_of": ["a", "b", "c"]}])
    base = map_external(scores, mapping)[Category.H]
    raised = dict(scores)
    raised[field] = min(1.0, raised[field] + bump)
    assert map_external(raised, mapping)[Category.H] >= base
