# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
One-pass evaluation metrics.

- Precision: the percentage of frames whose predicted center lies within ``tau`` pixels of
  the ground-truth center, for ``tau = 0, 1, ..., 50``. The precision score is the value at
  20 px.
- Success: the percentage of frames whose IOU with the ground truth is at least ``u``, for
  ``u = 0, 0.05, ..., 1``. The success score is the area under that curve, taken as the mean
  of the 21 samples.

All curves and scores are percentages.
"""

from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field

from fmst_tracker.domain.geometry import Rect, center_distance, iou
from fmst_tracker.errors import ContractViolationError, InvalidArgumentError, ShapeError

PRECISION_THRESHOLDS = np.arange(51, dtype=np.float64)
SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 21)
PRECISION_SCORE_AT = 20


class Curve(BaseModel):
    """A sampled metric curve and its representative score."""

    model_config = ConfigDict(frozen=True)

    thresholds: tuple[float, ...]
    values: tuple[float, ...]
    score: float = Field(ge=0, le=100)


class EvalResult(BaseModel):
    """Metrics of one task, or the average over several."""

    model_config = ConfigDict(frozen=True)

    name: str
    precision: Curve
    success: Curve
    frames: int = Field(ge=0, description="Frames tracked, excluding the initial frame.")
    seconds: float = Field(ge=0, description="Tracking wall-clock time, excluding file I/O.")

    @computed_field  # type: ignore[prop-decorator]
    @property
    def precision_score(self) -> float:
        return self.precision.score

    @computed_field  # type: ignore[prop-decorator]
    @property
    def success_score(self) -> float:
        return self.success.score

    @computed_field  # type: ignore[prop-decorator]
    @property
    def fps(self) -> float:
        return self.frames / self.seconds if self.seconds > 0 else 0.0


def _check_lengths(preds: Sequence[Rect], truths: Sequence[Rect]) -> None:
    if len(preds) != len(truths):
        msg = f"Got {len(preds)} predictions for {len(truths)} ground-truth rects."
        raise ShapeError(msg)
    if not preds:
        msg = "Metrics need at least one frame."
        raise InvalidArgumentError(msg)


def _percentages(hits: np.ndarray) -> tuple[float, ...]:
    return tuple(float(v) for v in 100.0 * hits.mean(axis=1))


def center_errors(preds: Sequence[Rect], truths: Sequence[Rect]) -> np.ndarray:
    """Per-frame center distances in pixels."""
    _check_lengths(preds, truths)
    return np.array([center_distance(p, t) for p, t in zip(preds, truths, strict=True)])


def overlaps(preds: Sequence[Rect], truths: Sequence[Rect]) -> np.ndarray:
    """Per-frame IOU."""
    _check_lengths(preds, truths)
    return np.array([iou(p, t) for p, t in zip(preds, truths, strict=True)])


def precision_curve(preds: Sequence[Rect], truths: Sequence[Rect]) -> Curve:
    """Percentage of frames with a center error of at most ``tau`` for every threshold."""
    errors = center_errors(preds, truths)
    values = _percentages(errors[None, :] <= PRECISION_THRESHOLDS[:, None])
    if any(later < earlier for earlier, later in zip(values, values[1:], strict=False)):
        msg = "The precision curve must be non-decreasing in the distance threshold."
        raise ContractViolationError(msg)
    return Curve(thresholds=tuple(PRECISION_THRESHOLDS.tolist()), values=values, score=values[PRECISION_SCORE_AT])


def success_curve(preds: Sequence[Rect], truths: Sequence[Rect]) -> Curve:
    """Percentage of frames with an IOU of at least ``u`` for every threshold; scored by the mean."""
    ious = overlaps(preds, truths)
    values = _percentages(ious[None, :] >= SUCCESS_THRESHOLDS[:, None])
    if any(later > earlier for earlier, later in zip(values, values[1:], strict=False)):
        msg = "The success curve must be non-increasing in the overlap threshold."
        raise ContractViolationError(msg)
    return Curve(thresholds=tuple(SUCCESS_THRESHOLDS.tolist()), values=values, score=float(np.mean(values)))


def evaluate(name: str, preds: Sequence[Rect], truths: Sequence[Rect], seconds: float = 0.0) -> EvalResult:
    """Both curves of one task."""
    return EvalResult(
        name=name,
        precision=precision_curve(preds, truths),
        success=success_curve(preds, truths),
        frames=len(preds),
        seconds=seconds,
    )


def _mean_curve(curves: Sequence[Curve]) -> Curve:
    values = np.mean([curve.values for curve in curves], axis=0)
    scores = float(np.mean([curve.score for curve in curves]))
    return Curve(thresholds=curves[0].thresholds, values=tuple(float(v) for v in values), score=scores)


def average_results(results: Sequence[EvalResult], name: str = "average") -> EvalResult:
    """
    Uniform average over tasks.

    Results are reduced in name order, so the average does not depend on the order in which
    tasks finished. Frames and seconds are summed, which makes the averaged FPS the overall
    throughput.
    """
    if not results:
        msg = "Cannot average an empty list of results."
        raise InvalidArgumentError(msg)
    ordered = sorted(results, key=lambda result: result.name)
    return EvalResult(
        name=name,
        precision=_mean_curve([result.precision for result in ordered]),
        success=_mean_curve([result.success for result in ordered]),
        frames=sum(result.frames for result in ordered),
        seconds=float(sum(result.seconds for result in ordered)),
    )
