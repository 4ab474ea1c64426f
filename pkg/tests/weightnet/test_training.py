# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

import logging
import re

import numpy as np
import pytest
from pydantic import ValidationError

from fmst_tracker.domain.geometry import Rect
from fmst_tracker.domain.scoring import FeatureMapSet, ScoreVector
from fmst_tracker.domain.targetmaps import MapType, Polarity, TargetMap
from fmst_tracker.errors import EmptyDatasetError
from fmst_tracker.features.backbone import BackboneSpec
from fmst_tracker.features.frame import Frame
from fmst_tracker.synthseq import render, synthetic_suite
from fmst_tracker.weightnet.network import TrainPair, forward, init_net
from fmst_tracker.weightnet.training import Adam, TrainConfig, build_dataset, fit, split_pairs, train

CHANNELS = 8
SIZE = 4


def _mask(top: int, left: int) -> np.ndarray:
    """Helper function to create a 0/1 mask with a 2x2 block at (top, left)."""
    mask = np.zeros((SIZE, SIZE))
    mask[top : top + 2, left : left + 2] = 1.0
    return mask


def _informative_pairs(count: int = 20, seed: int = 0) -> list[TrainPair]:
    """
    Helper function to create pairs in which channel 0 lights up exactly on the target.

    The other channels carry uniform noise, so only channel 0 predicts the next target map.

    Args:
        count: The number of pairs.
        seed: The seed of the noise.

    """
    rng = np.random.default_rng(seed)
    pairs = []
    for _ in range(count):
        first, second = _mask(*rng.integers(0, SIZE - 1, 2)), _mask(*rng.integers(0, SIZE - 1, 2))
        features = rng.uniform(0, 1, size=(CHANNELS, SIZE, SIZE))
        next_features = rng.uniform(0, 1, size=(CHANNELS, SIZE, SIZE))
        features[0], next_features[0] = first, second
        pairs.append(
            TrainPair(
                features=FeatureMapSet(data=features),
                target=TargetMap(values=2 * first - 1, kind=MapType.C),
                next_features=FeatureMapSet(data=next_features),
                next_target=TargetMap(values=2 * second - 1, kind=MapType.C),
            )
        )
    return pairs


def test_train_config_defaults() -> None:
    """Test the default training hyperparameters."""
    config = TrainConfig()

    assert (config.max_epochs, config.patience, config.batch_size) == (50, 20, 1)
    assert config.learning_rate == 0.001
    assert (config.beta1, config.beta2, config.epsilon) == (0.9, 0.999, 1e-8)
    assert config.validation_fraction == 0.1
    assert config.layer_dims(672) == (672, 672, 672)


def test_patience_below_max_epochs() -> None:
    """Test that the patience must be smaller than the epoch limit."""
    with pytest.raises(ValidationError, match=re.escape("The patience must be smaller than 'max_epochs'.")):
        _ = TrainConfig(max_epochs=10, patience=10)


def test_split_pairs() -> None:
    """Test that the split is seeded, disjoint and holds out about 10%."""
    train_idx, val_idx = split_pairs(30, TrainConfig(seed=4))

    assert len(val_idx) == 3
    assert sorted([*train_idx, *val_idx]) == list(range(30))
    np.testing.assert_array_equal(split_pairs(30, TrainConfig(seed=4))[1], val_idx)


def test_split_keeps_one_training_pair() -> None:
    """Test that both sides of a two pair split are non-empty."""
    train_idx, val_idx = split_pairs(2, TrainConfig(validation_fraction=0.9))

    assert len(train_idx) == 1
    assert len(val_idx) == 1


def test_fit_empty() -> None:
    """Test that training needs data."""
    with pytest.raises(EmptyDatasetError, match=re.escape("Cannot train on an empty dataset.")):
        _ = fit([], TrainConfig())


def test_fit_single_pair() -> None:
    """Test that a single pair cannot be split into training and validation data."""
    with pytest.raises(EmptyDatasetError, match=re.escape("Training needs at least 2 pairs, got 1.")):
        _ = fit(_informative_pairs(1), TrainConfig())


def test_zero_learning_rate_stops_after_patience() -> None:
    """Test that without updates training stops after `patience` epochs and returns the initial network."""
    initial = init_net((CHANNELS, CHANNELS, CHANNELS), np.random.default_rng(0))
    config = TrainConfig(learning_rate=0.0, max_epochs=10, patience=3)

    run = fit(_informative_pairs(6), config, initial=initial)

    assert run.best_epoch == 0
    assert len(run.history) == 4
    for trained, original in zip(run.net.parameters(), initial.parameters(), strict=True):
        np.testing.assert_array_equal(trained, original)


def test_adam_tiny_learning_rate() -> None:
    """Test that one Adam step with a vanishing learning rate leaves the parameters in place."""
    parameters = [np.array([1.0, -2.0]), np.array([[0.5]])]
    before = [p.copy() for p in parameters]
    optimizer = Adam(parameters, TrainConfig(learning_rate=1e-15))

    optimizer.step(parameters, [np.array([3.0, -1.0]), np.array([[100.0]])])

    for after, original in zip(parameters, before, strict=True):
        np.testing.assert_allclose(after, original, rtol=0, atol=1e-12)


def test_adam_first_step_size() -> None:
    """Test that the bias-corrected first Adam step moves every parameter by about the learning rate."""
    parameters = [np.array([0.0, 0.0])]
    optimizer = Adam(parameters, TrainConfig(learning_rate=0.01))

    optimizer.step(parameters, [np.array([4.0, -0.5])])

    np.testing.assert_allclose(parameters[0], [-0.01, 0.01], rtol=1e-6)


def test_training_prefers_the_informative_channel() -> None:
    """Test that the trained network weights the predictive channel above the median channel."""
    pairs = _informative_pairs(20)
    config = TrainConfig(max_epochs=30, patience=10, seed=1)

    run = fit(pairs, config)

    _, val_idx = split_pairs(len(pairs), config)
    for index in val_idx:
        s, _ = pairs[index].scores(Polarity.POSITIVE)
        weights = forward(run.net, ScoreVector(scores=s)).weights
        assert weights[0] > np.median(weights)
    assert run.best_val_loss < run.history[0].val_loss


def test_training_is_deterministic() -> None:
    """Test that identical seeds and data give bit-identical networks."""
    pairs = _informative_pairs(10)
    config = TrainConfig(max_epochs=5, patience=2, seed=3)

    first = train(pairs, config)
    second = train(pairs, config)

    for a, b in zip(first.parameters(), second.parameters(), strict=True):
        assert a.tobytes() == b.tobytes()


def test_best_snapshot_bookkeeping() -> None:
    """Test that the returned epoch has the lowest validation loss of the history."""
    run = fit(_informative_pairs(10), TrainConfig(max_epochs=8, patience=3, seed=2), Polarity.NEGATIVE)

    assert run.history[0].epoch == 0
    assert [record.epoch for record in run.history] == list(range(len(run.history)))
    assert run.best_val_loss == min(record.val_loss for record in run.history)


def _frames(count: int) -> list[Frame]:
    """Helper function to create frames with a bright square drifting to the right."""
    frames = []
    for t in range(count):
        pixels = np.full((60, 80, 3), 40, dtype=np.uint8)
        pixels[20:40, 20 + 2 * t : 40 + 2 * t] = 230
        frames.append(Frame(pixels=pixels, index=t))
    return frames


def test_build_dataset_pairs_consecutive_frames() -> None:
    """Test that a three frame sequence yields two pairs of Type S maps."""
    rects = [Rect(x=30 + 2 * t, y=30, w=20, h=20) for t in range(3)]
    spec = BackboneSpec(out_channels=16, input_size=32)

    pairs = build_dataset([(_frames(3), rects)], spec)

    assert len(pairs) == 2
    assert pairs[0].features.data.shape == (16, 14, 14)
    assert pairs[0].target.kind is MapType.S
    assert pairs[0].next_target.kind is MapType.S


def test_build_dataset_skips_short_sequences(caplog: pytest.LogCaptureFixture) -> None:
    """Test that a single frame sequence is skipped with a warning."""
    spec = BackboneSpec(out_channels=16, input_size=32)

    with caplog.at_level(logging.WARNING):
        pairs = build_dataset([(_frames(1), [Rect(x=30, y=30, w=20, h=20)])], spec, task_names=["short"])

    assert pairs == []
    assert "Skipping short" in caplog.text


def test_build_dataset_empty(caplog: pytest.LogCaptureFixture) -> None:
    """Test that no sequences give an empty dataset and a warning."""
    with caplog.at_level(logging.WARNING):
        pairs = build_dataset([], BackboneSpec(out_channels=16, input_size=32))

    assert pairs == []
    assert "the training dataset is empty" in caplog.text


def test_default_regime_on_synthetic_pairs() -> None:
    """Test that the default regime on 200 pairs cut from synthetic scenes ends below the untrained validation loss."""
    suite = synthetic_suite(count=4, frames=51, seed=50)
    pairs = build_dataset(
        [render(spec) for _, spec in suite],
        BackboneSpec(out_channels=16, input_size=64),
        [name for name, _ in suite],
    )
    config = TrainConfig()

    run = fit(pairs, config)

    assert len(pairs) == 200
    assert run.history[0].epoch == 0
    assert len(run.history) <= config.max_epochs + 1
    assert run.best_val_loss < run.history[0].val_loss
