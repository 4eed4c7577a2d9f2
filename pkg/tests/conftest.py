"""Shared desk-scale fixtures: small feature space, narrow network, and a
couple of pre-trained models reused across test modules."""

import pytest

from modpipe import FeaturizerConfig, NetworkConfig, TrainConfig, train
from modpipe.fixtures import make_labeled, make_planted_pool, attach_labels

DESK_FEAT = FeaturizerConfig(word_orders=(1,), char_orders=(), dim=2**12)


def desk_net(seed: int = 0, **overrides) -> NetworkConfig:
    base = dict(
        input_dim=DESK_FEAT.dim,
        d_model=32,
        head_hidden=32,
        dropout=0.0,
        critic_hidden=(8, 8),
        seed=seed,
    )
    base.update(overrides)
    return NetworkConfig(**base)


def desk_train(**overrides) -> TrainConfig:
    base = dict(lr=1.0, batch_size=64, epochs=120, seed=0)
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture(scope="session")
def desk_feat():
    return DESK_FEAT


@pytest.fixture(scope="session")
def marker_world():
    """Labeled train/test split of the marker world plus its truth tables."""
    train_ds, train_truth = make_labeled(600, seed=1, rates=0.25)
    test_ds, test_truth = make_labeled(300, seed=7, rates=0.25)
    return train_ds, train_truth, test_ds, test_truth


@pytest.fixture(scope="session")
def marker_model(marker_world):
    train_ds = marker_world[0]
    result = train(train_ds, desk_train(), desk_net(), DESK_FEAT)
    return result.model


@pytest.fixture(scope="session")
def planted_world():
    pool, truth = make_planted_pool(400, seed=3)
    return attach_labels(pool, truth), truth


@pytest.fixture(scope="session")
def planted_model(planted_world):
    labeled, _ = planted_world
    result = train(labeled, desk_train(), desk_net(), DESK_FEAT)
    return result.model
