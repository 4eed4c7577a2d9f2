import json

import numpy as np
import pytest

from modpipe.corpus import Dataset, Sample
from modpipe.fixtures import attach_labels, flip_labels, make_planted_pool
from modpipe.quality import (
    QualityError,
    audit_f1,
    audit_select,
    crossval_flag,
    relabel_trigger,
)
from modpipe.select import DatasetOracle
from modpipe.taxonomy import CATEGORIES, LabelVector

from conftest import DESK_FEAT, desk_net, desk_train


def vec(**labels):
    return LabelVector.from_mapping({k: v for k, v in labels.items()})


def labeled_sample(sid, text, vector):
    return Sample(id=sid, text=text, consolidated=vector)


def test_audit_select_draws_both_sides():
    ds = Dataset("audit")
    scores = {}
    s_idx = CATEGORIES.index("S")
    for i in range(8):
        sid = f"pos{i}"
        ds.add(labeled_sample(sid, f"text {sid}", vec(S="positive")))
        scores[sid] = np.full(8, 0.1)
    for i in range(8):
        sid = f"high{i}"
        ds.add(labeled_sample(sid, f"text {sid}", vec(S="negative")))
        scores[sid] = np.full(8, 0.1)
        scores[sid][s_idx] = 0.9
    picked = audit_select(ds, scores, seed=1, per_side=3)
    s_picks = picked["S"]
    assert 3 <= len(s_picks) <= 6
    assert len(set(s_picks)) == len(s_picks)
    assert all(p.startswith(("pos", "high")) for p in s_picks)
    assert any(p.startswith("pos") for p in s_picks)
    assert any(p.startswith("high") for p in s_picks)
    assert audit_select(ds, scores, seed=1, per_side=3) == picked  # deterministic


def test_audit_select_dedups_overlap():
    ds = Dataset("audit")
    scores = {}
    for i in range(3):
        sid = f"both{i}"  # positive by label and high by score
        ds.add(labeled_sample(sid, f"text {sid}", vec(S="positive")))
        scores[sid] = np.full(8, 0.9)
    picked = audit_select(ds, scores, seed=0, per_side=10)
    assert sorted(picked["S"]) == ["both0", "both1", "both2"]


def test_audit_select_degenerate_pools_empty():
    ds = Dataset("audit")
    ds.add(labeled_sample("n1", "text n1", vec(V="negative")))
    picked = audit_select(ds, {"n1": np.full(8, 0.2)}, seed=0, per_side=5)
    assert picked["S"] == []


def test_audit_f1_worked_example():
    annotator = {
        "a": vec(S="positive"),
        "b": vec(S="positive"),
        "c": vec(S="negative"),
    }
    auditor = {
        "a": vec(S="positive"),
        "b": vec(S="negative"),
        "c": vec(S="negative"),
    }
    report = audit_f1(annotator, auditor)
    s = report.categories["S"]
    assert (s.tp, s.fp, s.fn, s.tn) == (1, 1, 0, 1)
    assert s.f1 == pytest.approx(2.0 / 3.0)
    assert not s.flagged  # 0.667 >= default 0.6
    assert report.disagreements["S"] == ["b"]
    assert report.sample_ids == ["a", "b", "c"]


def test_audit_f1_flag_threshold_strict():
    annotator = {"a": vec(S="positive"), "b": vec(S="positive")}
    auditor = {"a": vec(S="positive"), "b": vec(S="negative")}
    # f1 = 2/3
    assert audit_f1(annotator, auditor, flag_below=0.7).categories["S"].flagged
    assert not audit_f1(annotator, auditor, flag_below=0.5).categories["S"].flagged
    # flagged only when strictly below
    exact = audit_f1(annotator, auditor, flag_below=2.0 / 3.0)
    assert not exact.categories["S"].flagged


def test_audit_f1_excludes_auditor_unlabeled():
    annotator = {"a": vec(S="positive", H="positive")}
    auditor = {"a": vec(S="positive")}  # H left unlabeled by auditor
    report = audit_f1(annotator, auditor)
    h = report.categories["H"]
    assert (h.tp, h.fp, h.fn, h.tn) == (0, 0, 0, 0)
    assert h.f1 is None
    assert not h.flagged


def test_audit_f1_counts_false_negatives():
    annotator = {"a": vec(V="negative")}
    auditor = {"a": vec(V="positive")}
    v = audit_f1(annotator, auditor).categories["V"]
    assert (v.tp, v.fp, v.fn, v.tn) == (0, 0, 1, 0)
    assert v.f1 == 0.0
    assert v.flagged


def test_audit_f1_undefined_never_zero_or_one():
    annotator = {"a": vec(S="negative")}
    auditor = {"a": vec(S="negative")}
    s = audit_f1(annotator, auditor).categories["S"]
    assert s.f1 is None
    assert not s.flagged


def test_audit_f1_missing_auditor_ids():
    annotator = {"a": vec(S="positive"), "d": vec(S="positive")}
    auditor = {"a": vec(S="positive")}
    with pytest.raises(QualityError, match="d"):
        audit_f1(annotator, auditor)


def test_audit_report_write(tmp_path):
    annotator = {"a": vec(S="positive")}
    auditor = {"a": vec(S="negative")}
    path = tmp_path / "audit.json"
    audit_f1(annotator, auditor).write(path)
    obj = json.loads(path.read_text())
    assert set(obj) == {"categories", "sample_ids", "disagreements"}
    assert obj["categories"]["S"]["fp"] == 1


def make_noisy_planted(n=400, flip=0.05, seed=40):
    pool, truth = make_planted_pool(n, seed=seed)
    noisy, flipped = flip_labels(attach_labels(pool, truth), flip, seed=seed + 1)
    return noisy, flipped, truth


def test_crossval_flags_planted_label_noise():
    noisy, flipped, _ = make_noisy_planted()
    flagged = crossval_flag(noisy, desk_train(epochs=120), desk_net(seed=0), DESK_FEAT, seed=7)
    assert flipped, "fixture should flip something"
    caught = flagged & flipped
    assert len(caught) >= 0.9 * len(flipped)
    base_rate = len(flipped) / len(noisy)
    enrichment = (len(caught) / len(flagged)) / base_rate
    assert enrichment >= 5.0


def test_crossval_flag_invariant_to_dataset_order():
    noisy, _, _ = make_noisy_planted(n=100, flip=0.08, seed=50)
    shuffled = Dataset("shuffled")
    order = list(noisy)
    rng = np.random.default_rng(3)
    rng.shuffle(order)
    for s in order:
        shuffled.add(s)
    cfg = desk_train(epochs=40)
    a = crossval_flag(noisy, cfg, desk_net(seed=1), DESK_FEAT, seed=9)
    b = crossval_flag(shuffled, cfg, desk_net(seed=1), DESK_FEAT, seed=9)
    assert a == b


def relabel_world(n_mislabeled):
    """Ten flagged samples, exactly n_mislabeled of them wrong vs the oracle."""
    ds = Dataset("relabel")
    truth = {}
    for i in range(10):
        sid = f"f{i}"
        true_vec = vec(S="positive") if i % 2 else vec(S="negative")
        stored = true_vec
        if i < n_mislabeled:
            stored = vec(S="negative") if i % 2 else vec(S="positive")
        ds.add(labeled_sample(sid, f"text {sid}", stored))
        truth[sid] = true_vec
    return ds, DatasetOracle(truth)


def test_relabel_trigger_boundary_is_strict():
    ds, oracle = relabel_world(3)
    decision = relabel_trigger([f"f{i}" for i in range(10)], ds, oracle, seed=0)
    assert len(decision.audited) == 10
    assert decision.fraction == pytest.approx(0.3)
    assert not decision.triggered  # exactly 30% does not trigger
    assert decision.queue == sorted(decision.mislabeled)
    assert len(decision.mislabeled) == 3


def test_relabel_trigger_fires_above_boundary():
    ds, oracle = relabel_world(4)
    flagged = [f"f{i}" for i in range(10)]
    decision = relabel_trigger(flagged, ds, oracle, seed=0)
    assert decision.triggered
    assert decision.queue == sorted(flagged)  # whole set goes back


def test_relabel_trigger_audit_size_rule():
    ds = Dataset("relabel")
    truth = {}
    ids = []
    for i in range(40):
        sid = f"g{i:02d}"
        ids.append(sid)
        ds.add(labeled_sample(sid, f"text {sid}", vec(S="negative")))
        truth[sid] = vec(S="negative")
    oracle = DatasetOracle(truth)
    # max(ceil(0.1*40), 10) = 10
    assert len(relabel_trigger(ids, ds, oracle, seed=1).audited) == 10
    # capped by the flagged set when it is small
    assert len(relabel_trigger(ids[:4], ds, oracle, seed=1).audited) == 4
    # fraction rule takes over for large sets: ceil(0.1*200) = 20
    big_ids = []
    for i in range(200):
        sid = f"h{i:03d}"
        big_ids.append(sid)
        ds.add(labeled_sample(sid, f"text {sid}", vec(S="negative")))
        truth[sid] = vec(S="negative")
    oracle = DatasetOracle(truth)
    assert len(relabel_trigger(big_ids, ds, oracle, seed=1).audited) == 20


def test_relabel_trigger_ignores_oracle_unlabeled():
    ds = Dataset("relabel")
    ds.add(labeled_sample("u1", "text u1", vec(S="positive", H="negative")))
    oracle = DatasetOracle({"u1": vec(S="positive")})  # H unlabeled by oracle
    decision = relabel_trigger(["u1"], ds, oracle, seed=0)
    assert decision.mislabeled == []
    assert not decision.triggered


def test_relabel_trigger_unlabeled_sample_counts_mislabeled():
    ds = Dataset("relabel")
    ds.add(Sample(id="u2", text="text u2"))
    oracle = DatasetOracle({"u2": vec(S="positive")})
    decision = relabel_trigger(["u2"], ds, oracle, seed=0)
    assert decision.mislabeled == ["u2"]
    assert decision.triggered


def test_relabel_trigger_requires_flags():
    ds = Dataset("relabel")
    with pytest.raises(QualityError):
        relabel_trigger([], ds, DatasetOracle({}), seed=0)
