# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Training of the weight generators.

Each training pair holds two consecutive frames of a sequence. Both feature sets are cut
from the ROI around the ground truth at time k; the target maps are Type S maps from the
ground truth at k and k+1. The positive generator learns from the pairs as they are, the
negative generator from the negated target maps.

Training runs Adam on single samples, shuffles the training split every epoch and stops
early when the mean validation loss has not improved for ``patience`` epochs. The network
with the best validation loss is returned.
"""

import logging
from collections.abc import Sequence
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic_core import InitErrorDetails

from fmst_tracker.domain.geometry import Rect, make_roi
from fmst_tracker.domain.targetmaps import Polarity, make_type_s
from fmst_tracker.errors import EmptyDatasetError
from fmst_tracker.features.backbone import Backbone, BackboneSpec, build_backbone
from fmst_tracker.features.frame import Frame
from fmst_tracker.validation import raise_for_errors, value_error
from fmst_tracker.weightnet.network import (
    DenseLayer,
    DenseNet,
    InputScaling,
    TrainPair,
    init_net,
    sample_grad,
    sample_loss,
)

logger = logging.getLogger(__name__)

_SPLIT_STREAM, _SHUFFLE_STREAM, _INIT_STREAM = 0, 1, 2


def validate_train_config(config: "TrainConfig") -> list[InitErrorDetails] | None:
    """
    Validates the early-stopping settings.

    - The patience must be smaller than the maximum number of epochs.
    """
    if config.patience >= config.max_epochs:
        return [value_error("The patience must be smaller than 'max_epochs'.", "patience", config.patience)]
    return None


class TrainConfig(BaseModel):
    """Hyperparameters of the weight generator training."""

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    max_epochs: int = Field(default=50, ge=1)
    patience: int = Field(default=20, ge=0)
    batch_size: int = Field(default=1, ge=1, le=1, description="Only single-pair updates are supported.")
    learning_rate: float = Field(default=0.001, ge=0)
    optimizer: Literal["adam"] = "adam"
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    epsilon: float = Field(default=1e-8, gt=0)
    validation_fraction: float = Field(default=0.1, gt=0, lt=1)
    hidden_dims: tuple[int, ...] | None = Field(
        default=None, description="Hidden layer widths; None means one hidden layer as wide as the input."
    )
    output_bias: float = 1.0
    input_scaling: InputScaling = InputScaling.MAX_ABS
    seed: int = Field(default=0, ge=0)

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_train_config)

    def layer_dims(self, channels: int) -> tuple[int, ...]:
        hidden = self.hidden_dims if self.hidden_dims is not None else (channels,)
        return (channels, *hidden, channels)


class EpochRecord(BaseModel):
    """Mean losses after one epoch; epoch 0 is the untrained network."""

    model_config = ConfigDict(frozen=True)

    epoch: int
    train_loss: float
    val_loss: float


class TrainingRun(BaseModel):
    """Outcome of a training run."""

    model_config = ConfigDict(frozen=True)

    net: DenseNet
    history: tuple[EpochRecord, ...]
    best_epoch: int

    @property
    def best_val_loss(self) -> float:
        return self.history[self.best_epoch].val_loss


class Adam:
    """Adam with bias correction, updating parameter arrays in place."""

    def __init__(self, parameters: Sequence[np.ndarray], config: TrainConfig) -> None:
        self.config = config
        self.first = [np.zeros_like(p) for p in parameters]
        self.second = [np.zeros_like(p) for p in parameters]
        self.steps = 0

    def step(self, parameters: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        cfg = self.config
        self.steps += 1
        first_correction = 1.0 - cfg.beta1**self.steps
        second_correction = 1.0 - cfg.beta2**self.steps
        for param, grad, first, second in zip(parameters, grads, self.first, self.second, strict=True):
            first *= cfg.beta1
            first += (1.0 - cfg.beta1) * grad
            second *= cfg.beta2
            second += (1.0 - cfg.beta2) * grad * grad
            step = (first / first_correction) / (np.sqrt(second / second_correction) + cfg.epsilon)
            param -= cfg.learning_rate * step


def split_pairs(count: int, config: TrainConfig) -> tuple[np.ndarray, np.ndarray]:
    """Seeded split into ``(train indices, validation indices)``; both sides are non-empty."""
    if count < 2:  # noqa: PLR2004
        msg = f"Training needs at least 2 pairs, got {count}."
        raise EmptyDatasetError(msg)
    order = np.random.default_rng([config.seed, _SPLIT_STREAM]).permutation(count)
    n_val = min(count - 1, max(1, round(config.validation_fraction * count)))
    return np.sort(order[n_val:]), np.sort(order[:n_val])


def _view(parameters: Sequence[np.ndarray], input_scaling: InputScaling) -> DenseNet:
    """Wrap live parameter arrays without copying or re-validating them."""
    layers = tuple(
        DenseLayer.model_construct(weight=w, bias=b) for w, b in zip(parameters[0::2], parameters[1::2], strict=True)
    )
    return DenseNet.model_construct(layers=layers, input_scaling=input_scaling)


def _mean_loss(net: DenseNet, samples: Sequence[tuple[np.ndarray, np.ndarray]]) -> float:
    return float(np.mean([sample_loss(net, s, g) for s, g in samples]))


def fit(
    pairs: Sequence[TrainPair],
    config: TrainConfig,
    polarity: Polarity = Polarity.POSITIVE,
    initial: DenseNet | None = None,
) -> TrainingRun:
    """Train one generator and return the best-validation network together with the loss history."""
    if not pairs:
        msg = "Cannot train on an empty dataset."
        raise EmptyDatasetError(msg)
    train_idx, val_idx = split_pairs(len(pairs), config)

    samples = [pair.scores(polarity) for pair in pairs]
    train_samples = [samples[i] for i in train_idx]
    val_samples = [samples[i] for i in val_idx]

    channels = pairs[0].features.channels
    if initial is None:
        init_rng = np.random.default_rng([config.seed, _INIT_STREAM, list(Polarity).index(polarity)])
        initial = init_net(config.layer_dims(channels), init_rng, config.output_bias, config.input_scaling)

    parameters = [p.copy() for p in initial.parameters()]
    optimizer = Adam(parameters, config)
    shuffle_rng = np.random.default_rng([config.seed, _SHUFFLE_STREAM])

    best_net = initial
    best_val = _mean_loss(initial, val_samples)
    best_epoch = 0
    history = [EpochRecord(epoch=0, train_loss=_mean_loss(initial, train_samples), val_loss=best_val)]
    stale = 0

    for epoch in range(1, config.max_epochs + 1):
        losses = []
        for index in shuffle_rng.permutation(len(train_samples)):
            s, g = train_samples[index]
            sample, grads = sample_grad(_view(parameters, initial.input_scaling), s, g)
            losses.append(sample)
            optimizer.step(parameters, grads)

        net = DenseNet.from_parameters(parameters, initial.input_scaling)
        val_loss = _mean_loss(net, val_samples)
        history.append(EpochRecord(epoch=epoch, train_loss=float(np.mean(losses)), val_loss=val_loss))
        logger.info(
            "%s epoch %d: train loss %.6g, validation loss %.6g", polarity, epoch, history[-1].train_loss, val_loss
        )

        if val_loss < best_val:
            best_net, best_val, best_epoch, stale = net, val_loss, epoch, 0
        else:
            stale += 1
            if stale >= config.patience:
                logger.info("%s training stopped early after epoch %d", polarity, epoch)
                break

    return TrainingRun(net=best_net, history=tuple(history), best_epoch=best_epoch)


def train(
    pairs: Sequence[TrainPair],
    config: TrainConfig,
    polarity: Polarity = Polarity.POSITIVE,
    initial: DenseNet | None = None,
) -> DenseNet:
    """Train one generator; see :func:`fit` for the loss history."""
    return fit(pairs, config, polarity, initial).net


def build_dataset(
    sequences: Sequence[tuple[Sequence[Frame], Sequence[Rect]]],
    backbone: BackboneSpec | Backbone,
    task_names: Sequence[str] | None = None,
) -> list[TrainPair]:
    """
    Cut consecutive-frame training pairs out of annotated sequences.

    Both frames of a pair are read through the ROI around the ground truth at time k.
    Sequences shorter than two frames are skipped with a warning.
    """
    extractor = build_backbone(backbone) if isinstance(backbone, BackboneSpec) else backbone
    resolution = extractor.spec.resolution
    if not sequences:
        logger.warning("No sequences given; the training dataset is empty")
        return []

    pairs: list[TrainPair] = []
    for number, (frames, rects) in enumerate(sequences):
        name = task_names[number] if task_names is not None else f"sequence-{number}"
        if len(frames) < 2 or len(rects) < 2:  # noqa: PLR2004
            logger.warning("Skipping %s: it has fewer than 2 annotated frames", name)
            continue

        task_backbone = extractor.for_task(name)
        for k in range(min(len(frames), len(rects)) - 1):
            roi = make_roi(rects[k], frames[k].image_size)
            pairs.append(
                TrainPair(
                    features=task_backbone.extract(frames[k], roi),
                    target=make_type_s(roi, rects[k], resolution),
                    next_features=task_backbone.extract(frames[k + 1], roi),
                    next_target=make_type_s(roi, rects[k + 1], resolution),
                )
            )
            task_backbone.release(frames[k].index)

    logger.info("Built %d training pairs from %d sequences", len(pairs), len(sequences))
    return pairs
