# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

import re

import numpy as np
import pytest
from pydantic import ValidationError

from fmst_tracker.domain.scoring import (
    FeatureMapSet,
    PredictionMap,
    ScoreVector,
    WeightVector,
    combine_maps,
    combine_pos_neg,
    normalize01,
    prediction_map,
    score_channels,
    selection_size,
    top_fraction_weights,
    update_avg_scores,
)
from fmst_tracker.domain.targetmaps import MapType, TargetMap
from fmst_tracker.errors import ContractViolationError, InvalidArgumentError, ShapeError


def _features(channels: int = 4, rows: int = 3, cols: int = 5, seed: int = 0) -> FeatureMapSet:
    """
    Helper function to create a random non-negative feature map set.

    Args:
        channels: The number of channels.
        rows: The number of rows per channel.
        cols: The number of columns per channel.
        seed: The seed of the generator.

    """
    return FeatureMapSet(data=np.random.default_rng(seed).uniform(0, 1, size=(channels, rows, cols)))


def _random_map(rows: int, cols: int, seed: int) -> TargetMap:
    """Helper function to create a random Type C target map."""
    signs = np.random.default_rng(seed).choice([-1.0, 1.0], size=(rows, cols))
    return TargetMap(values=signs, kind=MapType.C)


def _scores(values: list[float]) -> ScoreVector:
    """Helper function to wrap a list of floats in a score vector."""
    return ScoreVector(scores=np.array(values, dtype=float))


def test_score_channels_direct() -> None:
    """Test the score of a single channel against a two row map."""
    features = FeatureMapSet(data=np.array([[[1.0, 2.0], [3.0, 4.0]]]))
    target_map = TargetMap(values=np.array([[1.0, 1.0], [-1.0, -1.0]]), kind=MapType.C)

    assert score_channels(features, target_map).scores.tolist() == [-4.0]


def test_score_channels_counts_cells() -> None:
    """Test that an all-ones channel scores the number of +1 cells minus the number of -1 cells."""
    target_map = TargetMap(values=np.array([[1.0, -1.0, -1.0], [1.0, 1.0, -1.0]]), kind=MapType.C)
    features = FeatureMapSet(data=np.ones((2, 2, 3)))

    np.testing.assert_array_equal(score_channels(features, target_map).scores, [0.0, 0.0])


def test_score_channels_matches_loops() -> None:
    """Test that channel scores match a naive triple loop."""
    features = _features(channels=672, rows=14, cols=14, seed=1)
    target_map = _random_map(14, 14, seed=2)

    scores = score_channels(features, target_map).scores

    naive = np.zeros(672)
    for c in range(672):
        for r in range(14):
            for k in range(14):
                naive[c] += features.data[c, r, k] * target_map.values[r, k]
    np.testing.assert_allclose(scores, naive, rtol=0, atol=1e-9)


def test_score_channels_linear() -> None:
    """Test that scoring is linear in the features."""
    first, second = _features(seed=3), _features(seed=4)
    target_map = _random_map(3, 5, seed=5)
    combined = FeatureMapSet(data=2.0 * first.data + 0.5 * second.data)

    expected = 2.0 * score_channels(first, target_map).scores + 0.5 * score_channels(second, target_map).scores

    np.testing.assert_allclose(score_channels(combined, target_map).scores, expected, atol=1e-9)


def test_score_channels_shape_mismatch() -> None:
    """Test that a target map of the wrong size is rejected."""
    msg = "Target map shape (2, 2) does not match feature resolution (3, 5)."
    with pytest.raises(ShapeError, match=re.escape(msg)):
        _ = score_channels(_features(), _random_map(2, 2, seed=0))


def test_update_avg_scores_smoothing() -> None:
    """Test one smoothing step with eta 0.99."""
    updated = update_avg_scores(_scores([1.0]), _scores([0.0]), 0.99)

    assert updated.scores.tolist() == [0.99]


def test_update_avg_scores_fixed_point() -> None:
    """Test that averaging a vector with itself leaves it unchanged."""
    scores = _scores([0.5, -2.0, 3.0])

    np.testing.assert_array_equal(update_avg_scores(scores, scores, 0.5).scores, scores.scores)


def test_update_avg_scores_converges() -> None:
    """Test that repeated updates contract geometrically towards the instant scores."""
    average = _scores([10.0, -4.0])
    target = _scores([1.0, 1.0])
    for _ in range(500):
        average = update_avg_scores(average, target, 0.99)

    bound = np.abs(np.array([10.0, -4.0]) - 1.0) * 0.99**500
    assert (np.abs(average.scores - 1.0) <= bound + 1e-12).all()


@pytest.mark.parametrize("eta", [-0.1, 1.5])
def test_update_avg_scores_eta_out_of_range(eta: float) -> None:
    """Test that a smoothing coefficient outside [0, 1] is rejected."""
    with pytest.raises(InvalidArgumentError, match=re.escape("The smoothing coefficient must lie in [0, 1]")):
        _ = update_avg_scores(_scores([1.0]), _scores([1.0]), eta)


def test_update_avg_scores_length_mismatch() -> None:
    """Test that vectors of different lengths cannot be averaged."""
    with pytest.raises(ShapeError, match=re.escape("Cannot average score vectors of length 1 and 2.")):
        _ = update_avg_scores(_scores([1.0]), _scores([1.0, 2.0]), 0.5)


def test_top_fraction_single_channel() -> None:
    """Test that 10% of ten channels selects the single highest one."""
    weights = top_fraction_weights(_scores([5, 1, 3, 2, 4, 0, 6, 8, 7, 9]), 0.1)

    assert weights.selected == (9,)
    assert weights.weights.tolist() == [0.0] * 9 + [1.0]


def test_top_fraction_ties() -> None:
    """Test that ties are broken in favour of the lower channel index."""
    weights = top_fraction_weights(_scores([1.0] * 20), 0.1)

    assert weights.selected == (0, 1)


def test_top_fraction_matches_sort() -> None:
    """Test that the selection agrees with a full sort and has ceil(0.1 * 672) = 68 channels."""
    scores = np.random.default_rng(9).normal(size=672)

    weights = top_fraction_weights(ScoreVector(scores=scores), 0.1)

    assert len(weights.selected or ()) == 68
    assert set(weights.selected or ()) == {int(i) for i in sorted(range(672), key=lambda c: -scores[c])[:68]}
    assert weights.weights.sum() == 68


def test_top_fraction_affine_invariant() -> None:
    """Test that a positive affine rescaling of the scores selects the same channels."""
    scores = np.random.default_rng(10).normal(size=100)

    first = top_fraction_weights(ScoreVector(scores=scores), 0.15)
    second = top_fraction_weights(ScoreVector(scores=3.0 * scores + 7.0), 0.15)

    assert first.selected == second.selected


@pytest.mark.parametrize(
    ("fraction", "channels", "expected"), [(0.1, 672, 68), (0.1, 30, 3), (0.01, 5, 1), (1.0, 7, 7)]
)
def test_selection_size(fraction: float, channels: int, expected: int) -> None:
    """Test the ceiling rule for the number of selected channels."""
    assert selection_size(fraction, channels) == expected


@pytest.mark.parametrize("fraction", [0.0, 1.5])
def test_top_fraction_out_of_range(fraction: float) -> None:
    """Test that a selection fraction outside (0, 1] is rejected."""
    with pytest.raises(InvalidArgumentError, match=re.escape("The selection fraction must lie in (0, 1]")):
        _ = top_fraction_weights(_scores([1.0, 2.0]), fraction)


def test_top_fraction_empty() -> None:
    """Test that nothing can be selected from an empty score vector."""
    with pytest.raises(InvalidArgumentError, match=re.escape("Cannot select channels from an empty score vector.")):
        _ = top_fraction_weights(ScoreVector(scores=np.zeros(0)), 0.5)


def test_weight_vector_range() -> None:
    """Test that weights above the ReLU6 range are rejected."""
    with pytest.raises(ValidationError, match=re.escape("Every weight must lie in the range [0, 6].")):
        _ = WeightVector(weights=np.array([0.0, 6.5]))


def test_weight_vector_selection_consistency() -> None:
    """Test that hard selection weights must match the selected indices."""
    with pytest.raises(
        ValidationError, match=re.escape("Hard selection weights must be 1 on the selected channels and 0 elsewhere.")
    ):
        _ = WeightVector(weights=np.array([1.0, 0.0]), selected=(1,))


def test_prediction_map_one_hot() -> None:
    """Test that a one-hot weight vector reproduces its channel."""
    features = _features()
    weights = np.zeros(4)
    weights[2] = 1.0

    prediction = prediction_map(features, WeightVector(weights=weights))

    np.testing.assert_array_equal(prediction.values, features.data[2])
    assert not prediction.normalized


def test_prediction_map_sum_and_zero() -> None:
    """Test the channel sum for all-ones weights and the zero map for all-zero weights."""
    features = _features()

    total = prediction_map(features, WeightVector(weights=np.ones(4)))
    zero = prediction_map(features, WeightVector(weights=np.zeros(4)))

    naive = np.zeros((3, 5))
    for c in range(4):
        naive = naive + features.data[c]
    np.testing.assert_allclose(total.values, naive, atol=1e-12)
    assert zero.is_degenerate()


def test_prediction_map_linear() -> None:
    """Test that the prediction map is linear in the weights."""
    features = _features(seed=12)
    a, b = np.array([1.0, 0.0, 2.0, 0.5]), np.array([0.0, 3.0, 1.0, 0.0])

    combined = prediction_map(features, WeightVector(weights=a + b)).values
    separate = prediction_map(features, WeightVector(weights=a)).values + prediction_map(
        features, WeightVector(weights=b)
    ).values

    np.testing.assert_allclose(combined, separate, atol=1e-12)


def test_prediction_map_length_mismatch() -> None:
    """Test that the weight vector must have one entry per channel."""
    with pytest.raises(ShapeError, match=re.escape("Weight vector length 3 does not match 4 feature channels.")):
        _ = prediction_map(_features(), WeightVector(weights=np.ones(3)))


def test_normalize01() -> None:
    """Test the affine rescale to [0, 1]."""
    normalized = normalize01(PredictionMap(values=np.array([[0.0, 5.0], [10.0, 5.0]])))

    assert normalized.values.tolist() == [[0.0, 0.5], [1.0, 0.5]]
    assert normalized.normalized


def test_normalize01_constant() -> None:
    """Test that a constant map normalizes to all zero."""
    normalized = normalize01(PredictionMap(values=np.full((3, 3), 4.2)))

    assert normalized.is_degenerate()
    assert normalized.normalized


def test_normalize01_idempotent() -> None:
    """Test that normalizing a normalized map changes nothing."""
    once = normalize01(PredictionMap(values=np.random.default_rng(13).normal(size=(6, 6))))

    np.testing.assert_array_equal(normalize01(once).values, once.values)


def test_normalized_flag_checked() -> None:
    """Test that a map claiming to be normalized must span [0, 1]."""
    with pytest.raises(ValidationError, match=re.escape("A normalized prediction map must span exactly [0, 1].")):
        _ = PredictionMap(values=np.array([[0.0, 0.5]]), normalized=True)


def test_combine_pos_neg_alpha_zero() -> None:
    """Test that alpha 0 leaves the positive map unchanged."""
    positive = normalize01(PredictionMap(values=np.array([[0.0, 2.0], [1.0, 4.0]])))
    negative = normalize01(PredictionMap(values=np.array([[3.0, 0.0], [1.0, 2.0]])))

    np.testing.assert_array_equal(combine_pos_neg(positive, negative, 0.0).values, positive.values)


def test_combine_pos_neg_same_map() -> None:
    """Test that subtracting half of the same map halves it."""
    positive = normalize01(PredictionMap(values=np.array([[0.0, 2.0], [1.0, 4.0]])))

    np.testing.assert_array_equal(combine_pos_neg(positive, positive, 0.5).values, 0.5 * positive.values)


def test_combine_pos_neg_requires_normalized() -> None:
    """Test that raw maps cannot be combined."""
    raw = PredictionMap(values=np.array([[0.0, 2.0]]))
    with pytest.raises(ContractViolationError, match=re.escape("Prediction maps must be normalized")):
        _ = combine_pos_neg(raw, normalize01(raw), 0.5)


def test_combine_pos_neg_negative_alpha() -> None:
    """Test that a negative alpha is rejected."""
    normalized = normalize01(PredictionMap(values=np.array([[0.0, 2.0]])))
    with pytest.raises(InvalidArgumentError, match=re.escape("The negative map factor must be non-negative")):
        _ = combine_pos_neg(normalized, normalized, -0.5)


def test_combine_maps() -> None:
    """Test that combining sums the maps elementwise."""
    maps = [normalize01(PredictionMap(values=np.random.default_rng(s).normal(size=(4, 4)))) for s in range(3)]

    assert combine_maps(maps[:1]).values.tolist() == maps[0].values.tolist()
    np.testing.assert_array_equal(combine_maps([maps[0], maps[0]]).values, 2.0 * maps[0].values)
    np.testing.assert_allclose(combine_maps(maps).values, maps[0].values + maps[1].values + maps[2].values)


def test_combine_maps_empty() -> None:
    """Test that an empty list cannot be combined."""
    with pytest.raises(InvalidArgumentError, match=re.escape("Cannot combine an empty list of prediction maps.")):
        _ = combine_maps([])


def test_combine_maps_shape_mismatch() -> None:
    """Test that maps of different shapes cannot be combined."""
    a = normalize01(PredictionMap(values=np.array([[0.0, 1.0]])))
    b = normalize01(PredictionMap(values=np.array([[0.0], [1.0]])))

    with pytest.raises(ShapeError, match=re.escape("Prediction maps have different shapes")):
        _ = combine_maps([a, b])


def test_feature_map_set_rejects_nan() -> None:
    """Test that features with NaN entries are rejected."""
    data = np.ones((1, 2, 2))
    data[0, 0, 0] = np.nan

    with pytest.raises(ValidationError, match=re.escape("Feature data must only contain finite values.")):
        _ = FeatureMapSet(data=data)
