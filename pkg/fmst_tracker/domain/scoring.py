# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Channel scoring, weight vectors and prediction maps.

A feature map set ``F`` is a stack of ``C`` channels of equal size. Each channel is scored
against a target map ``M`` by summing ``F_c * M`` over all cells. Running-average scores feed
the hard top-fraction selection of classic FMST; learned weights come from
:mod:`fmst_tracker.weightnet`. The prediction map is the weighted channel sum ``F w``.
"""

import math
from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict
from pydantic_core import InitErrorDetails

from fmst_tracker.domain.targetmaps import TargetMap
from fmst_tracker.errors import ContractViolationError, InvalidArgumentError, ShapeError
from fmst_tracker.validation import raise_for_errors, value_error

WEIGHT_MAX = 6.0

# Guards ceil(fraction * C) against products such as 0.1 * 30 = 3.0000000000000004.
_CEIL_TOLERANCE = 1e-9


def validate_feature_map_set(features: "FeatureMapSet") -> list[InitErrorDetails] | None:
    """
    Validates a feature map set.

    - The data must be a (channels, rows, cols) array with at least one channel and one cell.
    - All entries must be finite.
    """
    validation_errors: list[InitErrorDetails] = []
    data = features.data

    if data.ndim != 3 or 0 in data.shape:  # noqa: PLR2004
        validation_errors.append(
            value_error("Feature data must be a non-empty (channels, rows, cols) array.", "data", data.shape)
        )
    elif not np.isfinite(data).all():
        validation_errors.append(value_error("Feature data must only contain finite values.", "data", None))

    return validation_errors or None


class FeatureMapSet(BaseModel):
    """``C`` feature channels sharing one ``rows x cols`` grid, stored channel-major."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    data: np.ndarray

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_feature_map_set)

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def rows(self) -> int:
        return int(self.data.shape[1])

    @property
    def cols(self) -> int:
        return int(self.data.shape[2])

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.rows, self.cols)


def _validate_vector(values: np.ndarray, field: str) -> list[InitErrorDetails]:
    validation_errors: list[InitErrorDetails] = []
    if values.ndim != 1:
        validation_errors.append(value_error(f"The {field} must be a one dimensional vector.", field, values.shape))
    elif not np.isfinite(values).all():
        validation_errors.append(value_error(f"The {field} must only contain finite values.", field, None))
    return validation_errors


def validate_score_vector(vector: "ScoreVector") -> list[InitErrorDetails] | None:
    """Validates that the scores form a finite one dimensional vector."""
    return _validate_vector(vector.scores, "scores") or None


class ScoreVector(BaseModel):
    """Per-channel scores."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    scores: np.ndarray

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_score_vector)

    def __len__(self) -> int:
        return int(self.scores.shape[0])


def validate_weight_vector(vector: "WeightVector") -> list[InitErrorDetails] | None:
    """
    Validates a weight vector.

    - The weights must be a finite one dimensional vector with entries in [0, 6].
    - With a selected index set the weights must be exactly 1 on the selection and 0 elsewhere.
    """
    validation_errors = _validate_vector(vector.weights, "weights")
    if validation_errors:
        return validation_errors

    weights = vector.weights
    if ((weights < 0) | (weights > WEIGHT_MAX)).any():
        validation_errors.append(value_error("Every weight must lie in the range [0, 6].", "weights", None))

    if vector.selected is not None:
        expected = np.zeros_like(weights)
        expected[list(vector.selected)] = 1.0
        if not np.array_equal(weights, expected):
            validation_errors.append(
                value_error(
                    "Hard selection weights must be 1 on the selected channels and 0 elsewhere.", "selected", None
                )
            )

    return validation_errors or None


class WeightVector(BaseModel):
    """Per-channel weights; ``selected`` is set for hard top-fraction selection."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    weights: np.ndarray
    selected: tuple[int, ...] | None = None

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_weight_vector)

    def __len__(self) -> int:
        return int(self.weights.shape[0])


def validate_prediction_map(prediction: "PredictionMap") -> list[InitErrorDetails] | None:
    """
    Validates a prediction map.

    - The values must be a finite, non-empty two dimensional matrix.
    - A normalized map must have minimum 0 and maximum 1, or be all zero.
    """
    values = prediction.values
    if values.ndim != 2 or values.size == 0:  # noqa: PLR2004
        return [value_error("The prediction map must be a non-empty two dimensional matrix.", "values", values.shape)]
    if not np.isfinite(values).all():
        return [value_error("The prediction map must only contain finite values.", "values", None)]

    if prediction.normalized:
        low, high = float(values.min()), float(values.max())
        if not ((low == 0.0 and high == 1.0) or (low == 0.0 and high == 0.0)):
            return [value_error("A normalized prediction map must span exactly [0, 1].", "values", (low, high))]

    return None


class PredictionMap(BaseModel):
    """A spatial heatmap of target likelihood over the ROI."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    normalized: bool = False

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_prediction_map)

    @property
    def shape(self) -> tuple[int, int]:
        rows, cols = self.values.shape
        return (rows, cols)

    def is_degenerate(self) -> bool:
        """Whether the map carries no information (all zero)."""
        return not self.values.any()


def score_channels(features: FeatureMapSet, target_map: TargetMap) -> ScoreVector:
    """Score every channel by the sum of its Hadamard product with the target map."""
    if target_map.shape != features.resolution:
        msg = f"Target map shape {target_map.shape} does not match feature resolution {features.resolution}."
        raise ShapeError(msg)
    scores = np.tensordot(features.data, target_map.values, axes=([1, 2], [0, 1]))
    return ScoreVector(scores=scores)


def update_avg_scores(average: ScoreVector, scores: ScoreVector, eta: float) -> ScoreVector:
    """Exponential smoothing ``eta * average + (1 - eta) * scores``."""
    if not 0.0 <= eta <= 1.0:
        msg = f"The smoothing coefficient must lie in [0, 1], got {eta}."
        raise InvalidArgumentError(msg)
    if len(average) != len(scores):
        msg = f"Cannot average score vectors of length {len(average)} and {len(scores)}."
        raise ShapeError(msg)
    return ScoreVector(scores=eta * average.scores + (1.0 - eta) * scores.scores)


def selection_size(fraction: float, channels: int) -> int:
    """
    Number of channels kept by a top-fraction selection, ``ceil(fraction * channels)``.

    >>> selection_size(0.1, 672)
    68
    >>> selection_size(0.1, 30)
    3
    """
    return max(1, min(channels, math.ceil(fraction * channels - _CEIL_TOLERANCE)))


def top_fraction_weights(average: ScoreVector, fraction: float) -> WeightVector:
    """
    Hard selection: weight 1 for the highest scoring ``ceil(fraction * C)`` channels, 0 otherwise.

    Ties are broken in favour of the lower channel index.
    """
    if not 0.0 < fraction <= 1.0:
        msg = f"The selection fraction must lie in (0, 1], got {fraction}."
        raise InvalidArgumentError(msg)
    channels = len(average)
    if channels == 0:
        msg = "Cannot select channels from an empty score vector."
        raise InvalidArgumentError(msg)

    k = selection_size(fraction, channels)
    order = np.argsort(-average.scores, kind="stable")
    selected = np.sort(order[:k])
    weights = np.zeros(channels)
    weights[selected] = 1.0
    return WeightVector(weights=weights, selected=tuple(int(i) for i in selected))


def prediction_map(features: FeatureMapSet, weights: WeightVector) -> PredictionMap:
    """The weighted channel sum ``sum_c w_c * F_c``."""
    if len(weights) != features.channels:
        msg = f"Weight vector length {len(weights)} does not match {features.channels} feature channels."
        raise ShapeError(msg)
    values = np.tensordot(weights.weights, features.data, axes=(0, 0))
    return PredictionMap(values=values)


def normalize01(prediction: PredictionMap) -> PredictionMap:
    """Affine rescale to [0, 1]; a constant map becomes all zero."""
    values = prediction.values
    low, high = values.min(), values.max()
    if high == low:
        return PredictionMap(values=np.zeros_like(values, dtype=float), normalized=True)
    scaled = (values - low) / (high - low)
    # Pin the extremes so rounding in the division cannot push them off 0 and 1.
    scaled[values == low] = 0.0
    scaled[values == high] = 1.0
    return PredictionMap(values=scaled, normalized=True)


def _check_same_shape(maps: Sequence[PredictionMap]) -> None:
    shapes = {m.shape for m in maps}
    if len(shapes) > 1:
        msg = f"Prediction maps have different shapes: {sorted(shapes)}."
        raise ShapeError(msg)


def _check_normalized(maps: Sequence[PredictionMap]) -> None:
    if not all(m.normalized for m in maps):
        msg = "Prediction maps must be normalized to [0, 1] before they are combined."
        raise ContractViolationError(msg)


def combine_pos_neg(positive: PredictionMap, negative: PredictionMap, alpha: float) -> PredictionMap:
    """``M_p - alpha * M_n`` for independently normalized positive and negative maps."""
    if alpha < 0:
        msg = f"The negative map factor must be non-negative, got {alpha}."
        raise InvalidArgumentError(msg)
    _check_same_shape((positive, negative))
    _check_normalized((positive, negative))
    return PredictionMap(values=positive.values - alpha * negative.values)


def combine_maps(maps: Sequence[PredictionMap]) -> PredictionMap:
    """Elementwise sum of normalized maps."""
    if not maps:
        msg = "Cannot combine an empty list of prediction maps."
        raise InvalidArgumentError(msg)
    _check_same_shape(maps)
    _check_normalized(maps)

    total = np.zeros_like(maps[0].values, dtype=float)
    for prediction in maps:
        total = total + prediction.values
    return PredictionMap(values=total)
