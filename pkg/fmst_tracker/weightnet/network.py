# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Dense network that turns a score vector into a weight vector.

The network maps the ``C`` channel scores to ``C`` channel weights through fully connected
layers: ReLU on the hidden layers and ReLU6 on the output, so every weight lies in [0, 6].
A network records how its input is prepared. With ``max_abs`` input scaling, the default for
newly initialised networks, scores are divided by their largest magnitude before the first
layer: the raw sums grow with the ROI size and the activation level of the backbone, the
ranking between channels does not. With ``none`` the scores enter the first layer unchanged.
Checkpoints store the choice, so a loaded network computes exactly what was trained.

Training minimises ``-sum(F' w * M')``: the prediction map built from the next frame's
features ``F'`` with the generated weights ``w``, against the next frame's target map ``M'``.
Since that loss is linear in ``w``, its gradient with respect to the weights is simply
``-g`` with ``g_c = sum(F'_c * M')``, which :func:`grad` backpropagates through the layers.
"""

from collections.abc import Sequence
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict
from pydantic_core import InitErrorDetails

from fmst_tracker.domain.scoring import (
    WEIGHT_MAX,
    FeatureMapSet,
    PredictionMap,
    ScoreVector,
    WeightVector,
    score_channels,
)
from fmst_tracker.domain.targetmaps import Polarity, TargetMap, with_polarity
from fmst_tracker.errors import ShapeError
from fmst_tracker.validation import raise_for_errors, value_error


class DenseLayer(BaseModel):
    """``z = W a + b`` with ``W`` of shape ``(out, in)``."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    weight: np.ndarray
    bias: np.ndarray

    @property
    def fan_in(self) -> int:
        return int(self.weight.shape[1])

    @property
    def fan_out(self) -> int:
        return int(self.weight.shape[0])


class InputScaling(StrEnum):
    """How a score vector is prepared before the first layer."""

    NONE = "none"
    MAX_ABS = "max_abs"


def validate_dense_net(net: "DenseNet") -> list[InitErrorDetails] | None:
    """
    Validates the layer stack of a dense network.

    - The network must have at least one layer.
    - Every weight must be a matrix and every bias a vector matching its rows.
    - Consecutive layers must chain, and the output size must equal the input size.
    - All parameters must be finite.
    """
    validation_errors: list[InitErrorDetails] = []

    if not net.layers:
        return [value_error("The network must have at least one layer.", "layers", net.layers)]

    for index, layer in enumerate(net.layers):
        if layer.weight.ndim != 2 or layer.bias.shape != (layer.weight.shape[0],):  # noqa: PLR2004
            validation_errors.append(
                value_error(f"Layer {index} has a weight/bias shape mismatch.", "layers", index)
            )
        elif not (np.isfinite(layer.weight).all() and np.isfinite(layer.bias).all()):
            validation_errors.append(value_error(f"Layer {index} has non-finite parameters.", "layers", index))
    if validation_errors:
        return validation_errors

    for index in range(1, len(net.layers)):
        if net.layers[index].fan_in != net.layers[index - 1].fan_out:
            validation_errors.append(
                value_error(f"Layer {index} does not chain onto layer {index - 1}.", "layers", index)
            )

    if net.layers[0].fan_in != net.layers[-1].fan_out:
        validation_errors.append(
            value_error("The network output size must equal its input size.", "layers", net.layer_dims)
        )

    return validation_errors or None


class DenseNet(BaseModel):
    """Fully connected score-to-weight network; ReLU hidden layers and a ReLU6 output."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    layers: tuple[DenseLayer, ...]
    input_scaling: InputScaling = InputScaling.NONE

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_dense_net)

    @property
    def channels(self) -> int:
        return self.layers[0].fan_in

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.layers[0].fan_in, *(layer.fan_out for layer in self.layers))

    def parameters(self) -> list[np.ndarray]:
        """All parameter arrays in layer order: ``W0, b0, W1, b1, ...``."""
        return [array for layer in self.layers for array in (layer.weight, layer.bias)]

    @classmethod
    def from_parameters(
        cls, parameters: Sequence[np.ndarray], input_scaling: InputScaling = InputScaling.NONE
    ) -> "DenseNet":
        """Inverse of :meth:`parameters`; arrays are copied."""
        pairs = zip(parameters[0::2], parameters[1::2], strict=True)
        layers = tuple(DenseLayer(weight=w.copy(), bias=b.copy()) for w, b in pairs)
        return cls(layers=layers, input_scaling=input_scaling)


def init_net(
    layer_dims: Sequence[int],
    rng: np.random.Generator,
    output_bias: float = 1.0,
    input_scaling: InputScaling = InputScaling.MAX_ABS,
) -> DenseNet:
    """
    Glorot-uniform weights, zero hidden biases and a constant output bias.

    The output bias starts the generated weights inside the linear range of ReLU6.
    """
    layers = []
    for index, (fan_in, fan_out) in enumerate(zip(layer_dims[:-1], layer_dims[1:], strict=True)):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weight = rng.uniform(-limit, limit, size=(fan_out, fan_in))
        is_output = index == len(layer_dims) - 2
        bias = np.full(fan_out, output_bias if is_output else 0.0)
        layers.append(DenseLayer(weight=weight, bias=bias))
    return DenseNet(layers=tuple(layers), input_scaling=input_scaling)


def scale_scores(scores: np.ndarray) -> np.ndarray:
    """Divide by the largest magnitude; an all-zero vector stays zero."""
    peak = np.abs(scores).max()
    if peak == 0:
        return np.zeros_like(scores, dtype=float)
    return scores / peak


@dataclass(frozen=True)
class ForwardTrace:
    """Layer inputs and pre-activations kept for backpropagation."""

    inputs: list[np.ndarray]
    pre_activations: list[np.ndarray]
    output: np.ndarray


def prepare_input(net: DenseNet, scores: np.ndarray) -> np.ndarray:
    """The first-layer input for `scores` under the network's input scaling."""
    if net.input_scaling is InputScaling.MAX_ABS:
        return scale_scores(scores)
    return np.asarray(scores, dtype=float)


def _forward(net: DenseNet, scores: np.ndarray) -> ForwardTrace:
    activation = prepare_input(net, scores)
    inputs, pre_activations = [], []
    last = len(net.layers) - 1
    for index, layer in enumerate(net.layers):
        inputs.append(activation)
        z = layer.weight @ activation + layer.bias
        pre_activations.append(z)
        activation = np.clip(z, 0.0, WEIGHT_MAX) if index == last else np.maximum(z, 0.0)
    return ForwardTrace(inputs=inputs, pre_activations=pre_activations, output=activation)


def forward(net: DenseNet, scores: ScoreVector) -> WeightVector:
    """Generate the weight vector for a score vector."""
    if len(scores) != net.channels:
        msg = f"Score vector length {len(scores)} does not match network input size {net.channels}."
        raise ShapeError(msg)
    return WeightVector(weights=_forward(net, scores.scores).output)


def loss(prediction: PredictionMap, next_target: TargetMap) -> float:
    """``-sum(M_hat * M_next)``: rewards activity on the target, penalises it elsewhere."""
    if prediction.shape != next_target.shape:
        msg = f"Prediction shape {prediction.shape} does not match target map shape {next_target.shape}."
        raise ShapeError(msg)
    return -float(np.sum(prediction.values * next_target.values))


class TrainPair(BaseModel):
    """Features and positive target maps at times k and k+1."""

    model_config = ConfigDict(frozen=True)

    features: FeatureMapSet
    target: TargetMap
    next_features: FeatureMapSet
    next_target: TargetMap

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_train_pair)

    def scores(self, polarity: Polarity) -> tuple[np.ndarray, np.ndarray]:
        """Network input ``s`` (time k) and loss coefficients ``g`` (time k+1) for one polarity."""
        s = score_channels(self.features, with_polarity(self.target, polarity)).scores
        g = score_channels(self.next_features, with_polarity(self.next_target, polarity)).scores
        return s, g


def validate_train_pair(pair: TrainPair) -> list[InitErrorDetails] | None:
    """
    Validates that the two time steps of a training pair are consistent.

    - Both feature sets must have the same shape.
    - Both target maps must match the feature resolution.
    - Both target maps must be positive.
    """
    validation_errors: list[InitErrorDetails] = []

    if pair.features.data.shape != pair.next_features.data.shape:
        validation_errors.append(
            value_error("Both feature sets of a pair must have the same shape.", "next_features", None)
        )
    for field, target in (("target", pair.target), ("next_target", pair.next_target)):
        if target.shape != pair.features.resolution:
            validation_errors.append(value_error("The target map must match the feature resolution.", field, None))
        if target.polarity is not Polarity.POSITIVE:
            validation_errors.append(value_error("Training pairs hold positive target maps.", field, None))

    return validation_errors or None


def backward(net: DenseNet, trace: ForwardTrace, output_grad: np.ndarray) -> list[np.ndarray]:
    """Backpropagate ``dL/dw`` through the layers; gradients in :meth:`DenseNet.parameters` order."""
    grads: list[np.ndarray] = []
    delta = output_grad
    last = len(net.layers) - 1
    for index in range(last, -1, -1):
        z = trace.pre_activations[index]
        mask = (z > 0) & (z < WEIGHT_MAX) if index == last else z > 0
        dz = delta * mask
        grads.append(dz)
        grads.append(np.outer(dz, trace.inputs[index]))
        delta = net.layers[index].weight.T @ dz
    grads.reverse()
    return grads


def sample_loss(net: DenseNet, s: np.ndarray, g: np.ndarray) -> float:
    """Loss of one sample from its precomputed score and loss-coefficient vectors."""
    return -float(_forward(net, s).output @ g)


def sample_grad(net: DenseNet, s: np.ndarray, g: np.ndarray) -> tuple[float, list[np.ndarray]]:
    """Loss and parameter gradients of one sample from precomputed score vectors."""
    trace = _forward(net, s)
    return -float(trace.output @ g), backward(net, trace, -g)


def grad(net: DenseNet, pair: TrainPair, polarity: Polarity = Polarity.POSITIVE) -> list[np.ndarray]:
    """
    Exact gradients of the pair loss with respect to every parameter.

    The negative polarity scores and evaluates with the negated target maps. Subgradients
    at the ReLU and ReLU6 kinks are 0.
    """
    s, g = pair.scores(polarity)
    return sample_grad(net, s, g)[1]


def pair_loss(net: DenseNet, pair: TrainPair, polarity: Polarity = Polarity.POSITIVE) -> float:
    """Loss of one pair: the next-frame prediction map scored against the next-frame target map."""
    s, _ = pair.scores(polarity)
    weights = forward(net, ScoreVector(scores=s))
    prediction = PredictionMap(values=np.tensordot(weights.weights, pair.next_features.data, axes=(0, 0)))
    return loss(prediction, with_polarity(pair.next_target, polarity))