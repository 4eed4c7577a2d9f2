import math

import numpy as np
import pytest

from modpipe.features import shared_featurizer
from modpipe.fixtures import make_labeled, make_shift_pool
from modpipe.net import (
    encode_batch,
    heads_from_h,
    init_params,
    max_critic_abs,
    new_model,
    theta_c_keys,
    theta_z_keys,
)
from modpipe.taxonomy import CATEGORIES, Label, LabelVector
from modpipe.train import (
    TrainConfig,
    TrainError,
    classification_loss,
    critic_loss,
    labeled_arrays,
    masked_bce,
    supervised_step,
    targets_matrix,
    train,
    wdat_step,
)

from conftest import DESK_FEAT, desk_net, desk_train


def one_sample(y, w):
    """Column matrices for a single sample with given targets and mask."""
    return np.array(y, dtype=float).reshape(-1, 1), np.array(w, dtype=float).reshape(-1, 1)


def test_masked_bce_half_probability_is_ln2():
    Y, W = one_sample([1, 0, 0, 0, 0, 0, 0, 0], [1, 0, 0, 0, 0, 0, 0, 0])
    P = np.full((8, 1), 0.5)
    assert masked_bce(P, Y, W) == pytest.approx(math.log(2.0), abs=1e-15)


def test_masked_bce_perfect_prediction_clamped():
    Y, W = one_sample([1] * 8, [1] * 8)
    P = np.ones((8, 1))
    assert 0.0 < masked_bce(P, Y, W) < 1e-6


def test_masked_bce_averages_labeled_categories():
    Y, W = one_sample([1, 0, 0, 0, 0, 0, 0, 0], [1, 1, 0, 0, 0, 0, 0, 0])
    P = np.full((8, 1), 0.5)
    P[0, 0], P[1, 0] = 0.8, 0.3
    a = -math.log(0.8)
    b = -math.log(0.7)
    assert masked_bce(P, Y, W) == pytest.approx((a + b) / 2.0, abs=1e-12)


def test_masked_bce_unlabeled_sample_contributes_zero():
    Y = np.zeros((8, 2))
    W = np.zeros((8, 2))
    Y[0, 0] = 1.0
    W[0, 0] = 1.0  # second sample fully unlabeled
    P = np.full((8, 2), 0.5)
    assert masked_bce(P, Y, W) == pytest.approx(math.log(2.0) / 2.0, abs=1e-15)


def test_masked_bce_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(1, 9))
        P = rng.uniform(0.001, 0.999, size=(8, n))
        Y = rng.integers(0, 2, size=(8, n)).astype(float)
        W = rng.integers(0, 2, size=(8, n)).astype(float)
        total = 0.0
        for j in range(n):
            labeled = [k for k in range(8) if W[k, j] > 0]
            if not labeled:
                continue
            s = sum(-(Y[k, j] * math.log(P[k, j]) + (1 - Y[k, j]) * math.log(1 - P[k, j])) for k in labeled)
            total += s / len(labeled)
        assert masked_bce(P, Y, W) == pytest.approx(total / n, rel=1e-12)


def test_classification_loss_single_sample():
    vec = LabelVector.from_mapping({"S": "positive"})
    probs = [0.5] + [0.9] * 7  # unlabeled categories must not count
    assert classification_loss(probs, vec) == pytest.approx(math.log(2.0), abs=1e-12)


def test_targets_matrix_layout():
    vecs = [
        LabelVector.from_mapping({"S": "positive", "H": "negative"}),
        LabelVector.unlabeled(),
    ]
    Y, W = targets_matrix(vecs)
    assert Y.shape == W.shape == (8, 2)
    s_idx = CATEGORIES.index("S")
    h_idx = CATEGORIES.index("H")
    assert Y[s_idx, 0] == 1.0 and W[s_idx, 0] == 1.0
    assert Y[h_idx, 0] == 0.0 and W[h_idx, 0] == 1.0
    assert not W[:, 1].any()


def test_labeled_arrays_skips_unlabeled_samples(desk_feat):
    labeled, truth = make_labeled(20, seed=5, rates=0.3)
    pool, _ = make_shift_pool(10, seed=6, domain="target")
    for s in pool:
        labeled.add(s)
    X, Y, W = labeled_arrays(labeled, desk_feat)
    assert X.shape[0] == 20
    assert Y.shape == (8, 20)
    assert W.any(axis=0).all()


def test_critic_loss_identical_batches_is_zero(desk_feat):
    model = new_model(desk_net(seed=1), desk_feat)
    texts = ["apple banana", "carrot dog", "eel fox"]
    assert critic_loss(texts, list(texts), model) == 0.0


def test_critic_loss_symmetric(desk_feat):
    model = new_model(desk_net(seed=1), desk_feat)
    a = ["apple banana", "carrot dog"]
    b = ["green house", "iron jug", "kite lamp"]
    assert critic_loss(a, b, model) == pytest.approx(critic_loss(b, a, model), abs=0)


def test_critic_loss_matches_brute_force(desk_feat):
    from modpipe.features import featurize
    from modpipe.net import critic_forward, encode

    model = new_model(desk_net(seed=2), desk_feat)
    src = ["apple banana", "carrot dog", "eel fox"]
    tgt = ["green house", "iron jug"]

    def mean_out(texts):
        vals = [
            critic_forward(encode(featurize(t, desk_feat), model.params, model.net_config), model.params, model.net_config)
            for t in texts
        ]
        return sum(vals) / len(vals)

    want = abs(mean_out(src) - mean_out(tgt))
    assert critic_loss(src, tgt, model) == pytest.approx(want, abs=1e-12)


def test_critic_loss_rejects_empty_batch(desk_feat):
    model = new_model(desk_net(seed=1), desk_feat)
    with pytest.raises(TrainError):
        critic_loss(["text"], [], model)


def test_config_validation():
    with pytest.raises(TrainError):
        TrainConfig(lr=0.0)
    with pytest.raises(TrainError):
        TrainConfig(clip=0.0)
    with pytest.raises(TrainError):
        TrainConfig(mode="adversarial-ish")
    cfg = TrainConfig.from_obj({"lr": 0.25, "bogus_key": 1})
    assert cfg.lr == 0.25


def test_lambda_zero_reproduces_supervised_encoder_exactly(desk_feat):
    train_set, _ = make_labeled(80, seed=11, rates=0.25)
    pool, _ = make_shift_pool(40, seed=12, domain="target")
    net_cfg = desk_net(seed=0, dropout=0.1)
    sup = train(train_set, desk_train(epochs=3, lr=0.5, batch_size=32, mode="supervised"), net_cfg, desk_feat)
    adv = train(
        train_set,
        desk_train(epochs=3, lr=0.5, batch_size=32, mode="wdat", lam=0.0),
        net_cfg,
        desk_feat,
        target_pool=pool,
    )
    for key in theta_z_keys() + theta_c_keys():
        assert np.array_equal(sup.model.params[key], adv.model.params[key]), key
    assert [e.L_c for e in sup.report.entries] == [e.L_c for e in adv.report.entries]
    # The critic still trains (ascent runs regardless of lambda).
    assert not np.array_equal(sup.model.params["Wd0"], adv.model.params["Wd0"])


def test_critic_clip_invariant_after_every_step(desk_feat):
    train_set, _ = make_labeled(64, seed=13, rates=0.25)
    pool, _ = make_shift_pool(64, seed=14, domain="target")
    net_cfg = desk_net(seed=1)
    cfg = desk_train(mode="wdat", lam=0.1, lr=0.5, batch_size=16)
    X, Y, W = labeled_arrays(train_set, desk_feat)
    Xt = shared_featurizer(desk_feat).matrix([s.text for s in pool])
    params = init_params(net_cfg)
    rng = np.random.default_rng(0)
    for start in range(0, X.shape[0], cfg.batch_size):
        sl = slice(start, start + cfg.batch_size)
        wdat_step(params, net_cfg, cfg, X[sl], Y[:, sl], W[:, sl], Xt[sl], rng)
        assert max_critic_abs(params, net_cfg) <= cfg.clip


def test_tiny_lr_step_does_not_increase_loss(desk_feat):
    train_set, _ = make_labeled(48, seed=15, rates=0.25)
    net_cfg = desk_net(seed=2, dropout=0.0)
    cfg = desk_train(lr=1e-6, batch_size=48)
    X, Y, W = labeled_arrays(train_set, desk_feat)
    params = init_params(net_cfg)
    rng = np.random.default_rng(0)

    def eval_loss():
        fwd = encode_batch(X, params, net_cfg)
        return masked_bce(heads_from_h(fwd.H, params, net_cfg).P, Y, W)

    for _ in range(5):
        before = eval_loss()
        supervised_step(params, net_cfg, cfg, X, Y, W, rng)
        assert eval_loss() <= before + 1e-8


def test_same_seed_gives_identical_checkpoint(desk_feat):
    train_set, _ = make_labeled(60, seed=16, rates=0.25)
    cfg = desk_train(epochs=4, lr=0.5, batch_size=20)
    net_cfg = desk_net(seed=3, dropout=0.2)
    a = train(train_set, cfg, net_cfg, desk_feat)
    b = train(train_set, cfg, net_cfg, desk_feat)
    assert a.model.checkpoint_id() == b.model.checkpoint_id()
    c = train(train_set, desk_train(epochs=4, lr=0.5, batch_size=20, seed=9), net_cfg, desk_feat)
    assert c.model.checkpoint_id() != a.model.checkpoint_id()


def test_train_accuracy_on_separable_data(marker_world, marker_model):
    # Train accuracy on the planted-marker world should be essentially perfect.
    train_set, truth, _, _ = marker_world
    correct = 0
    total = 0
    for s in train_set:
        probs = marker_model.score_map(s.text)
        vec = truth[s.id]
        for cat in CATEGORIES:
            lab = vec[cat]
            if lab is Label.UNLABELED:
                continue
            total += 1
            if (probs[cat.value] > 0.5) == (lab is Label.POSITIVE):
                correct += 1
    assert total > 0
    assert correct / total >= 0.999


def test_planted_keyword_fully_learned(planted_world, planted_model):
    ds, truth = planted_world
    h = CATEGORIES.index("H")
    for s in ds:
        want = truth[s.id].values[h] is Label.POSITIVE
        got = planted_model.score_text(s.text)[h] > 0.5
        assert got == want


def test_validation_selects_best_epoch(desk_feat):
    train_set, _ = make_labeled(24, seed=17, rates=0.3)
    val_set, _ = make_labeled(40, seed=18, rates=0.3)
    net_cfg = desk_net(seed=4, dropout=0.3)
    result = train(train_set, desk_train(epochs=12, lr=2.0, batch_size=8), net_cfg, desk_feat, validation=val_set)
    assert len(result.report.entries) == 12
    losses = [e.val_loss for e in result.report.entries]
    assert all(v is not None for v in losses)
    Xv, Yv, Wv = labeled_arrays(val_set, desk_feat)
    fwd = encode_batch(Xv, result.model.params, net_cfg)
    now = masked_bce(heads_from_h(fwd.H, result.model.params, net_cfg).P, Yv, Wv)
    assert now == min(losses)


def test_wdat_requires_target_pool(desk_feat):
    train_set, _ = make_labeled(20, seed=19, rates=0.3)
    cfg = desk_train(epochs=1, mode="wdat")
    with pytest.raises(TrainError, match="target"):
        train(train_set, cfg, desk_net(seed=0), desk_feat)


def test_zero_epochs_returns_initial_parameters(desk_feat):
    train_set, _ = make_labeled(20, seed=20, rates=0.3)
    net_cfg = desk_net(seed=5)
    result = train(train_set, desk_train(epochs=0), net_cfg, desk_feat)
    assert result.report.entries == []
    assert result.model.checkpoint_id() == new_model(net_cfg, desk_feat).checkpoint_id()


def test_train_rejects_fully_unlabeled_set(desk_feat):
    pool, _ = make_shift_pool(10, seed=21, domain="source")
    with pytest.raises(TrainError, match="labeled"):
        train(pool, desk_train(epochs=1), desk_net(seed=0), desk_feat)
