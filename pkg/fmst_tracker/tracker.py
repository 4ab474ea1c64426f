# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
The per-sequence tracking loop.

On the first frame the tracker cuts the ROI around the given rect, scores every feature
channel against the target maps and derives the channel weights. Every following frame:

1. cut the ROI around the previous estimate and extract its features,
2. build one normalized prediction map per active (map type, polarity),
3. combine positive and negative maps as ``M_p - alpha * M_n`` when the negative side is
   active, sum over map types and normalize again,
4. sample candidates around the previous estimate, cap them at the image size and keep the
   most confident one,
5. re-score the channels against target maps of the rect just selected, inside the same
   ROI and features, update the running averages and refresh the weights.

In ``fmst_hard`` mode the weights come from the top-fraction selection of the running
averages and negative maps are not used. In ``learned`` mode they are generated by the
positive and negative networks.
"""

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic_core import InitErrorDetails

from fmst_tracker.config import NetInput, TrackerConfig, TrackerMode
from fmst_tracker.domain.candidates import limit_size, sample_candidate_array, select_best_index
from fmst_tracker.domain.geometry import Rect, RoiWindow, make_roi
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
    top_fraction_weights,
    update_avg_scores,
)
from fmst_tracker.domain.targetmaps import MapType, Polarity, make_target_map, with_polarity
from fmst_tracker.errors import EmptyDatasetError, InvalidArgumentError, InvalidRectError, ShapeError
from fmst_tracker.features.backbone import Backbone, build_backbone
from fmst_tracker.features.frame import Frame
from fmst_tracker.validation import raise_for_errors, value_error
from fmst_tracker.weightnet.checkpoint import WeightNets
from fmst_tracker.weightnet.network import DenseNet, forward

logger = logging.getLogger(__name__)

MapKey = tuple[MapType, Polarity]


def validate_tracker_state(state: "TrackerState") -> list[InitErrorDetails] | None:
    """
    Validates the state carried between frames.

    - Running averages and weights must exist for the same (map type, polarity) keys.
    - Every score and weight vector must have the same length.
    """
    validation_errors: list[InitErrorDetails] = []

    if not state.avg_scores:
        validation_errors.append(value_error("The state must track at least one score vector.", "avg_scores", None))
    if set(state.avg_scores) != set(state.weights):
        validation_errors.append(
            value_error("Scores and weights must be kept for the same map keys.", "weights", sorted(state.weights))
        )

    lengths = {len(v) for v in state.avg_scores.values()} | {len(v) for v in state.weights.values()}
    if len(lengths) > 1:
        validation_errors.append(
            value_error("All score and weight vectors must have the same length.", "weights", sorted(lengths))
        )

    return validation_errors or None


class TrackerState(BaseModel):
    """Everything carried from one frame to the next."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    prev_rect: Rect
    avg_scores: dict[MapKey, ScoreVector]
    weights: dict[MapKey, WeightVector]
    frame_index: int = Field(ge=0)
    rng: np.random.Generator

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_tracker_state)

    @property
    def channels(self) -> int:
        return len(next(iter(self.avg_scores.values())))


@dataclass(frozen=True)
class StepRecord:
    """What one tracking step did; handed to the optional trace sink."""

    frame_index: int
    roi: RoiWindow
    rect: Rect
    update_rect: Rect
    confidence: float
    degenerate: bool


TraceSink = Callable[[StepRecord], None]


def _clone_rng(rng: np.random.Generator) -> np.random.Generator:
    bit_generator = type(rng.bit_generator)()
    bit_generator.state = rng.bit_generator.state
    return np.random.Generator(bit_generator)


class Tracker:
    """
    A configured tracker: the backbone and, in learned mode, the weight networks.

    Instances hold no per-sequence state, so one tracker can serve many sequences as long
    as each sequence threads its own :class:`TrackerState` through :meth:`step`.
    """

    def __init__(self, config: TrackerConfig, backbone: Backbone | None = None, nets: WeightNets | None = None) -> None:
        self.config = config
        self.backbone = backbone if backbone is not None else build_backbone(config.backbone)
        self.nets = self._resolve_nets(nets) if config.mode is TrackerMode.LEARNED else None
        self.keys: tuple[MapKey, ...] = tuple(
            (kind, polarity)
            for kind in config.ordered_map_types
            for polarity in (Polarity.POSITIVE, Polarity.NEGATIVE)
            if polarity is Polarity.POSITIVE or config.negative_active
        )

    def _resolve_nets(self, nets: WeightNets | None) -> WeightNets:
        if nets is None and self.config.positive_net is not None:
            nets = WeightNets.load(self.config.positive_net, self.config.negative_net)
        if nets is None:
            msg = "Learned mode requires weight networks; pass them or set 'positive_net'."
            raise InvalidArgumentError(msg)
        if self.config.negative_active and nets.negative is None:
            msg = "Negative maps are enabled but no negative weight network was given."
            raise InvalidArgumentError(msg)

        channels = self.backbone.spec.out_channels
        for net in (nets.positive, nets.negative):
            if net is not None and net.channels != channels:
                msg = f"Weight network expects {net.channels} channels, the backbone produces {channels}."
                raise ShapeError(msg)
        return nets

    def for_task(self, task: str) -> "Tracker":
        """A tracker sharing configuration and networks, with the backbone bound to `task`."""
        return Tracker(self.config, self.backbone.for_task(task), self.nets)

    def _net(self, polarity: Polarity) -> DenseNet:
        if self.nets is None:
            msg = "No weight networks are loaded."
            raise InvalidArgumentError(msg)
        net = self.nets.positive if polarity is Polarity.POSITIVE else self.nets.negative
        if net is None:
            msg = f"No {polarity} weight network is loaded."
            raise InvalidArgumentError(msg)
        return net

    def _measure(self, features: FeatureMapSet, roi: RoiWindow, rect: Rect) -> dict[MapKey, ScoreVector]:
        scores: dict[MapKey, ScoreVector] = {}
        for kind in self.config.ordered_map_types:
            target = make_target_map(kind, roi, rect, features.resolution)
            for key in self.keys:
                if key[0] is kind:
                    scores[key] = score_channels(features, with_polarity(target, key[1]))
        return scores

    def _weights(self, key: MapKey, average: ScoreVector, instant: ScoreVector) -> WeightVector:
        if self.config.mode is TrackerMode.FMST_HARD:
            return top_fraction_weights(average, self.config.selection_fraction)
        source = average if self.config.net_input is NetInput.AVERAGE else instant
        return forward(self._net(key[1]), source)

    def _prediction(self, features: FeatureMapSet, weights: dict[MapKey, WeightVector]) -> PredictionMap:
        per_type: list[PredictionMap] = []
        for kind in self.config.ordered_map_types:
            positive = normalize01(prediction_map(features, weights[kind, Polarity.POSITIVE]))
            if self.config.negative_active:
                negative = normalize01(prediction_map(features, weights[kind, Polarity.NEGATIVE]))
                per_type.append(normalize01(combine_pos_neg(positive, negative, self.config.alpha)))
            else:
                per_type.append(positive)
        return normalize01(combine_maps(per_type))

    def init(self, frame: Frame, truth: Rect) -> TrackerState:
        """Start tracking `truth` on `frame`: scores, running averages and weights of frame 0."""
        width, height = frame.image_size
        if not (0 <= truth.x < width and 0 <= truth.y < height):
            msg = f"The initial rect center ({truth.x}, {truth.y}) lies outside the {width}x{height} frame."
            raise InvalidRectError(msg)

        roi = make_roi(truth, frame.image_size)
        features = self.backbone.extract(frame, roi)
        scores = self._measure(features, roi, truth)
        self.backbone.release(frame.index)
        return TrackerState(
            prev_rect=truth,
            avg_scores=scores,
            weights={key: self._weights(key, scores[key], scores[key]) for key in self.keys},
            frame_index=frame.index,
            rng=np.random.default_rng(self.config.sampler.seed),
        )

    def step(self, state: TrackerState, frame: Frame, trace: TraceSink | None = None) -> tuple[TrackerState, Rect]:
        """Locate the target in `frame`; the returned state is the one to pass with the next frame."""
        cfg = self.config
        prev = state.prev_rect
        roi = make_roi(prev, frame.image_size)
        features = self.backbone.extract(frame, roi)
        if features.channels != state.channels:
            msg = f"Frame {frame.index} has {features.channels} feature channels, the state tracks {state.channels}."
            raise ShapeError(msg)

        final = self._prediction(features, state.weights)
        rng = _clone_rng(state.rng)
        if final.is_degenerate():
            logger.warning("Frame %d: prediction map is all zero, keeping the previous rect", frame.index)
            rect, confidence = prev, 0.0
        else:
            boxes = limit_size(sample_candidate_array(prev, cfg.sampler, rng), frame.image_size)
            best, confidence = select_best_index(final, boxes, prev, roi, cfg.b)
            x, y, w, h = boxes[best].tolist()
            rect = Rect(x=x, y=y, w=w, h=h)
        logger.debug("Frame %d: rect %s with confidence %.6g", frame.index, rect, confidence)

        scores = self._measure(features, roi, rect)
        self.backbone.release(frame.index)
        averages = {key: update_avg_scores(state.avg_scores[key], scores[key], cfg.eta) for key in self.keys}
        weights = {key: self._weights(key, averages[key], scores[key]) for key in self.keys}

        if trace is not None:
            trace(
                StepRecord(
                    frame_index=frame.index,
                    roi=roi,
                    rect=rect,
                    update_rect=rect,
                    confidence=confidence,
                    degenerate=final.is_degenerate(),
                )
            )

        new_state = TrackerState(prev_rect=rect, avg_scores=averages, weights=weights, frame_index=frame.index, rng=rng)
        return new_state, rect

    def track(self, frames: Sequence[Frame], init_rect: Rect, trace: TraceSink | None = None) -> list[Rect]:
        """Initialize on the first frame and return one rect for each following frame."""
        if not frames:
            msg = "Cannot track an empty sequence."
            raise EmptyDatasetError(msg)
        state = self.init(frames[0], init_rect)
        rects: list[Rect] = []
        for frame in frames[1:]:
            state, rect = self.step(state, frame, trace)
            rects.append(rect)
        return rects


def init(frame: Frame, truth: Rect, cfg: TrackerConfig, nets: WeightNets | None = None) -> TrackerState:
    """Initialize a state with a freshly built :class:`Tracker`."""
    return Tracker(cfg, nets=nets).init(frame, truth)


def step(
    state: TrackerState, frame: Frame, cfg: TrackerConfig, nets: WeightNets | None = None
) -> tuple[TrackerState, Rect]:
    """
    One tracking step with a freshly built :class:`Tracker`.

    Building the backbone on every call is wasteful for long sequences; keep a
    :class:`Tracker` around instead.
    """
    return Tracker(cfg, nets=nets).step(state, frame)


def track_sequence(
    frames: Sequence[Frame],
    init_rect: Rect,
    cfg: TrackerConfig,
    nets: WeightNets | None = None,
    trace: TraceSink | None = None,
) -> list[Rect]:
    """Track `init_rect` through `frames`; the result has one rect per frame after the first."""
    return Tracker(cfg, nets=nets).track(frames, init_rect, trace)
