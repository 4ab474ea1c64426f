# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Candidate generation and selection on a prediction map.

Candidates are drawn around the previous estimate: the center from a normal distribution
with standard deviation ``sigma_xy * max(w, h)``, and a single scale factor per candidate
from ``N(size_mean, sigma_wh)`` that multiplies both width and height, so the aspect ratio
never changes. A ``size_mean`` slightly below 1 makes the sampler prefer shrinking, which
counters the bias of the area-sum score towards large boxes. The tracker also caps candidates
at the image size, so a box never outgrows the frame it is tracked in.

A candidate's score is the sum of ``m - b`` over the map cells it covers. Its confidence is
``(1 - d / D) * (score - min score)`` where ``d`` is the distance to the previous center and
``D`` half of the longer ROI side.
"""

from collections.abc import Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fmst_tracker.domain.geometry import Rect, RoiWindow, cell_spans, center_distance
from fmst_tracker.domain.scoring import PredictionMap
from fmst_tracker.errors import ContractViolationError, InvalidArgumentError

MIN_SCALE = 0.05
DEFAULT_OFFSET = 0.2


class SamplerParams(BaseModel):
    """Parameters of the Gaussian candidate sampler."""

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    sigma_xy: float = Field(default=0.01, ge=0)
    sigma_wh: float = Field(default=1 / 3, ge=0)
    n_r: int = Field(default=600, ge=1)
    size_mean: float = Field(default=0.996, gt=0)
    seed: int = Field(default=0, ge=0)


class CandidateEvaluation(BaseModel):
    """Score, distance and confidence of one candidate rect."""

    model_config = ConfigDict(frozen=True)

    rect: Rect
    score: float
    distance: float = Field(ge=0)
    confidence: float
    degenerate: bool = False


def _draw_scales(params: SamplerParams, rng: np.random.Generator) -> np.ndarray:
    scales = rng.normal(params.size_mean, params.sigma_wh, params.n_r)
    rejected = scales <= MIN_SCALE
    while rejected.any():
        scales[rejected] = rng.normal(params.size_mean, params.sigma_wh, int(rejected.sum()))
        rejected = scales <= MIN_SCALE
    return scales


def sample_candidate_array(prev: Rect, params: SamplerParams, rng: np.random.Generator) -> np.ndarray:
    """Draw ``n_r`` candidates as an ``(n_r, 4)`` array of center-based ``x, y, w, h`` rows."""
    if params.size_mean <= MIN_SCALE and params.sigma_wh == 0:
        msg = f"A deterministic scale of {params.size_mean} is at or below the minimum of {MIN_SCALE}."
        raise InvalidArgumentError(msg)

    spread = params.sigma_xy * max(prev.w, prev.h)
    xs = rng.normal(prev.x, spread, params.n_r)
    ys = rng.normal(prev.y, spread, params.n_r)
    scales = _draw_scales(params, rng)
    return np.column_stack((xs, ys, scales * prev.w, scales * prev.h))


def limit_size(boxes: np.ndarray, image_size: tuple[int, int]) -> np.ndarray:
    """
    Shrink candidates wider or taller than the image until they fit, keeping each aspect ratio.

    >>> limit_size(np.array([[10.0, 10.0, 400.0, 100.0]]), (200, 150)).tolist()
    [[10.0, 10.0, 200.0, 50.0]]
    """
    width, height = image_size
    factors = np.minimum(1.0, np.minimum(width / boxes[:, 2], height / boxes[:, 3]))
    limited = boxes.copy()
    limited[:, 2:] *= factors[:, None]
    return limited


def sample_candidates(prev: Rect, params: SamplerParams, rng: np.random.Generator | None = None) -> list[Rect]:
    """
    Draw ``n_r`` candidate rects around `prev`.

    Without an explicit generator the stream is seeded from ``params.seed``, so repeated
    calls return identical lists.
    """
    generator = rng if rng is not None else np.random.default_rng(params.seed)
    boxes = sample_candidate_array(prev, params, generator)
    return [Rect(x=x, y=y, w=w, h=h) for x, y, w, h in boxes.tolist()]


def _as_array(cands: Sequence[Rect]) -> np.ndarray:
    return np.array([[c.x, c.y, c.w, c.h] for c in cands], dtype=float).reshape(-1, 4)


def area_scores(
    prediction: PredictionMap, boxes: np.ndarray, roi: RoiWindow, b: float = DEFAULT_OFFSET
) -> tuple[np.ndarray, np.ndarray]:
    """
    Sum of ``m - b`` over the cells each box covers, and the number of covered cells.

    Coverage uses the cell-center rule shared with the target maps. Sums come from a
    summed-area table, so the cost per box is constant.
    """
    rows, cols = prediction.shape
    dx = boxes[:, 0] - roi.bounds.x
    dy = boxes[:, 1] - roi.bounds.y
    left = (roi.bounds.w - boxes[:, 2]) / 2 + dx
    right = (roi.bounds.w + boxes[:, 2]) / 2 + dx
    top = (roi.bounds.h - boxes[:, 3]) / 2 + dy
    bottom = (roi.bounds.h + boxes[:, 3]) / 2 + dy
    c0, c1 = cell_spans(left, right, roi.bounds.w, cols)
    r0, r1 = cell_spans(top, bottom, roi.bounds.h, rows)

    table = np.zeros((rows + 1, cols + 1))
    table[1:, 1:] = prediction.values.cumsum(axis=0).cumsum(axis=1)
    sums = table[r1, c1] - table[r0, c1] - table[r1, c0] + table[r0, c0]
    counts = (r1 - r0) * (c1 - c0)
    return sums - b * counts, counts


def confidences(scores: np.ndarray, distances: np.ndarray, half_side: float) -> np.ndarray:
    """``(1 - d / D) * (score - min score)``, with the distance factor clamped at 0 beyond ``D``."""
    factor = np.clip(1.0 - distances / half_side, 0.0, None)
    return factor * (scores - scores.min())


def _require_normalized(prediction: PredictionMap) -> None:
    if not prediction.normalized:
        msg = "Candidates must be evaluated on a prediction map normalized to [0, 1]."
        raise ContractViolationError(msg)


def evaluate_array(
    prediction: PredictionMap, boxes: np.ndarray, prev: Rect, roi: RoiWindow, b: float = DEFAULT_OFFSET
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized evaluation returning ``(scores, distances, confidences, covered cell counts)``."""
    _require_normalized(prediction)
    scores, counts = area_scores(prediction, boxes, roi, b)
    distances = np.hypot(boxes[:, 0] - prev.x, boxes[:, 1] - prev.y)
    return scores, distances, confidences(scores, distances, roi.half_side), counts


def evaluate_candidates(
    prediction: PredictionMap, cands: Sequence[Rect], prev: Rect, roi: RoiWindow, b: float = DEFAULT_OFFSET
) -> list[CandidateEvaluation]:
    """Evaluate a batch of candidates; confidences are relative to the batch's minimum score."""
    if not cands:
        return []
    scores, distances, confs, counts = evaluate_array(prediction, _as_array(cands), prev, roi, b)
    return [
        CandidateEvaluation(
            rect=cand,
            score=float(scores[i]),
            distance=float(distances[i]),
            confidence=float(confs[i]),
            degenerate=bool(counts[i] == 0),
        )
        for i, cand in enumerate(cands)
    ]


def evaluate_candidate(
    prediction: PredictionMap,
    cand: Rect,
    prev: Rect,
    roi: RoiWindow,
    b: float = DEFAULT_OFFSET,
    min_score: float | None = None,
) -> CandidateEvaluation:
    """
    Evaluate one candidate.

    The confidence needs the minimum score over the whole batch; pass it as `min_score`.
    Without it the candidate is its own batch and its confidence is 0.
    """
    _require_normalized(prediction)
    scores, counts = area_scores(prediction, _as_array([cand]), roi, b)
    score = float(scores[0])
    distance = center_distance(cand, prev)
    floor = score if min_score is None else min_score
    factor = max(0.0, 1.0 - distance / roi.half_side)
    return CandidateEvaluation(
        rect=cand,
        score=score,
        distance=distance,
        confidence=factor * (score - floor),
        degenerate=bool(counts[0] == 0),
    )


def select_best_index(
    prediction: PredictionMap, boxes: np.ndarray, prev: Rect, roi: RoiWindow, b: float = DEFAULT_OFFSET
) -> tuple[int, float]:
    """Index and confidence of the most confident box; ties go to the lower index."""
    if boxes.shape[0] == 0:
        msg = "Cannot select from an empty candidate list."
        raise InvalidArgumentError(msg)
    _, _, confs, _ = evaluate_array(prediction, boxes, prev, roi, b)
    best = int(np.argmax(confs))
    return best, float(confs[best])


def select_best(
    prediction: PredictionMap, cands: Sequence[Rect], prev: Rect, roi: RoiWindow, b: float = DEFAULT_OFFSET
) -> Rect:
    """The candidate with maximal confidence."""
    if not cands:
        msg = "Cannot select from an empty candidate list."
        raise InvalidArgumentError(msg)
    best, _ = select_best_index(prediction, _as_array(cands), prev, roi, b)
    return cands[best]
