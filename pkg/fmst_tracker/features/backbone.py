# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Feature backbones.

The tracker only needs something that turns a frame and a ROI into a
:class:`~fmst_tracker.domain.scoring.FeatureMapSet`. Two backbones are registered:

- ``synthetic``: a deterministic stand-in for a CNN. The ROI, grown by one output cell on each
  side, is warped bilinearly onto the input grid (edge pixels replicated past the image
  border). Five statistics are area-pooled onto a ``(rows + 2) x (cols + 2)`` grid: mean R,
  G, B and the horizontal and vertical gradient magnitudes. Each output channel is a fixed
  random 3x3 filter over those statistics, tapered towards its center tap, followed by a
  ReLU. The valid filter positions give a ``rows x cols`` map whose cells line up with the
  target-map cells of the ROI.
- ``file``: precomputed tensors exported by an external CNN, read from FMT1 files.

Further backbones can be added with :func:`register_backbone`.
"""

import logging
from abc import ABC, abstractmethod
from collections.abc import Callable
from enum import StrEnum
from pathlib import Path

import cv2
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from pydantic import BaseModel, ConfigDict, Field
from pydantic_core import InitErrorDetails

from fmst_tracker.domain.geometry import Rect, RoiWindow
from fmst_tracker.domain.scoring import FeatureMapSet
from fmst_tracker.errors import InvalidArgumentError, MissingFeatureError, ShapeError
from fmst_tracker.features.frame import Frame
from fmst_tracker.features.tensor_file import feature_path, load_tensor
from fmst_tracker.validation import raise_for_errors, value_error

logger = logging.getLogger(__name__)

STATISTICS = 5
FILTER_SIZE = 3
FILTER_TAPER = (0.25, 1.0, 0.25)


class BackboneKind(StrEnum):
    """Available feature backbones."""

    SYNTHETIC = "synthetic"
    FILE = "file"


def validate_backbone_spec(spec: "BackboneSpec") -> list[InitErrorDetails] | None:
    """
    Validates a backbone description.

    - A file backbone must name the directory holding the precomputed tensors.
    - The synthetic backbone's input must be large enough to pool onto the statistics grid.
    """
    validation_errors: list[InitErrorDetails] = []

    if spec.kind is BackboneKind.FILE and spec.feature_dir is None:
        validation_errors.append(
            value_error("A file backbone requires 'feature_dir' to be set.", "feature_dir", spec.feature_dir)
        )

    if spec.kind is BackboneKind.SYNTHETIC and spec.input_size < max(spec.out_rows, spec.out_cols) + FILTER_SIZE - 1:
        validation_errors.append(
            value_error(
                "The input size is too small for the requested output resolution.", "input_size", spec.input_size
            )
        )

    return validation_errors or None


class BackboneSpec(BaseModel):
    """Which backbone produces the features, and at which resolution."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: BackboneKind = BackboneKind.SYNTHETIC
    out_rows: int = Field(default=14, ge=1)
    out_cols: int = Field(default=14, ge=1)
    out_channels: int = Field(default=672, ge=1)
    input_size: int = Field(default=224, ge=1)
    synthetic_seed: int = 0
    feature_dir: Path | None = None

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_backbone_spec)

    @property
    def resolution(self) -> tuple[int, int]:
        return (self.out_rows, self.out_cols)


class Backbone(ABC):
    """Turns a frame and a ROI into feature maps; instances are immutable once built."""

    def __init__(self, spec: BackboneSpec) -> None:
        self.spec = spec

    @abstractmethod
    def extract(self, frame: Frame, roi: RoiWindow) -> FeatureMapSet:
        """Compute the feature maps of `roi` in `frame`."""

    def for_task(self, task: str) -> "Backbone":  # noqa: ARG002
        """Return the backbone to use for one task; backbones without per-task state return themselves."""
        return self

    def release(self, frame_index: int) -> None:  # noqa: ARG002, B027
        """Drop anything kept for `frame_index`; the tracker calls this once it is done with a frame."""


def crop_roi(frame: Frame, roi: RoiWindow, input_size: int) -> np.ndarray:
    """
    Sample the ROI onto an ``input_size`` squared grid, values in [0, 1].

    The window is mapped straight onto the output with a bilinear affine warp; samples past
    the image border take the nearest edge pixel. Memory use depends on the input size only,
    however far the window reaches outside the frame.
    """
    step_x = roi.bounds.w / input_size
    step_y = roi.bounds.h / input_size
    transform = np.array(
        [
            [step_x, 0.0, roi.bounds.left + 0.5 * step_x - 0.5],
            [0.0, step_y, roi.bounds.top + 0.5 * step_y - 0.5],
        ]
    )
    image = frame.pixels.astype(np.float32) / np.float32(255.0)
    crop = cv2.warpAffine(
        image,
        transform,
        (input_size, input_size),
        flags=cv2.INTER_LINEAR | cv2.WARP_INVERSE_MAP,
        borderMode=cv2.BORDER_REPLICATE,
    )
    return crop.astype(np.float64)


class SyntheticBackbone(Backbone):
    """Deterministic random-filter features over pooled color and gradient statistics."""

    def __init__(self, spec: BackboneSpec) -> None:
        super().__init__(spec)
        rng = np.random.default_rng(spec.synthetic_seed)
        taper = np.broadcast_to(np.outer(FILTER_TAPER, FILTER_TAPER), (STATISTICS, FILTER_SIZE, FILTER_SIZE))
        filters = rng.standard_normal((FILTER_SIZE * FILTER_SIZE * STATISTICS, spec.out_channels))
        self.filters = filters * taper.reshape(-1, 1)
        self.filters.setflags(write=False)

    def statistics(self, image: np.ndarray) -> np.ndarray:
        """Pool mean R, G, B and gradient magnitudes onto a ``(rows + 2, cols + 2, 5)`` grid."""
        grid = (self.spec.out_cols + FILTER_SIZE - 1, self.spec.out_rows + FILTER_SIZE - 1)
        gray = image.mean(axis=2)
        grad_x = np.abs(cv2.Sobel(gray, cv2.CV_64F, 1, 0, ksize=1))
        grad_y = np.abs(cv2.Sobel(gray, cv2.CV_64F, 0, 1, ksize=1))
        color = cv2.resize(image, grid, interpolation=cv2.INTER_AREA)
        pooled_x = cv2.resize(grad_x, grid, interpolation=cv2.INTER_AREA)
        pooled_y = cv2.resize(grad_y, grid, interpolation=cv2.INTER_AREA)
        return np.dstack((color, pooled_x, pooled_y))

    def context_window(self, roi: RoiWindow) -> RoiWindow:
        """The ROI grown by one output cell on every side, so each filter is centered on its own cell."""
        grow_x = (self.spec.out_cols + FILTER_SIZE - 1) / self.spec.out_cols
        grow_y = (self.spec.out_rows + FILTER_SIZE - 1) / self.spec.out_rows
        bounds = roi.bounds
        grown = Rect(x=bounds.x, y=bounds.y, w=bounds.w * grow_x, h=bounds.h * grow_y)
        return RoiWindow(bounds=grown, image_size=roi.image_size)

    def extract(self, frame: Frame, roi: RoiWindow) -> FeatureMapSet:
        stats = self.statistics(crop_roi(frame, self.context_window(roi), self.spec.input_size))
        windows = sliding_window_view(stats, (FILTER_SIZE, FILTER_SIZE), axis=(0, 1))
        rows, cols = windows.shape[:2]
        patches = windows.reshape(rows, cols, -1)
        responses = np.maximum(patches @ self.filters, 0.0)
        return FeatureMapSet(data=np.ascontiguousarray(responses.transpose(2, 0, 1)))


class FileBackbone(Backbone):
    """Reads precomputed FMT1 tensors; bind it to a task with :meth:`for_task` before extracting."""

    def __init__(self, spec: BackboneSpec, task: str | None = None) -> None:
        super().__init__(spec)
        if spec.feature_dir is None:
            msg = "A file backbone requires a feature directory."
            raise InvalidArgumentError(msg)
        self.feature_dir = spec.feature_dir
        self.task = task
        self._cache: dict[int, FeatureMapSet] = {}

    def for_task(self, task: str) -> "FileBackbone":
        return FileBackbone(self.spec, task)

    def preload(self, frame_indices: range) -> None:
        """Read the tensors of the given frames up front so extraction does no file I/O."""
        for index in frame_indices:
            self._load(index)

    def release(self, frame_index: int) -> None:
        self._cache.pop(frame_index, None)

    @property
    def cached_frames(self) -> tuple[int, ...]:
        """Indices of the frames whose tensors are held in memory."""
        return tuple(sorted(self._cache))

    def _load(self, index: int) -> FeatureMapSet:
        if index in self._cache:
            return self._cache[index]
        if self.task is None:
            msg = "The file backbone is not bound to a task."
            raise MissingFeatureError(msg)

        path = feature_path(self.feature_dir, self.task, index)
        if not path.is_file():
            msg = f"No feature tensor for frame {index} of task '{self.task}' at {path}."
            raise MissingFeatureError(msg)

        features = load_tensor(path)
        if features.channels != self.spec.out_channels:
            msg = f"{path} has {features.channels} channels, expected {self.spec.out_channels}."
            raise ShapeError(msg)
        self._cache[index] = features
        return features

    def extract(self, frame: Frame, roi: RoiWindow) -> FeatureMapSet:  # noqa: ARG002
        return self._load(frame.index)


BackboneFactory = Callable[[BackboneSpec], Backbone]

_REGISTRY: dict[BackboneKind, BackboneFactory] = {}


def register_backbone(kind: BackboneKind, factory: BackboneFactory) -> None:
    """Register the factory that builds backbones of `kind`, replacing any previous one."""
    _REGISTRY[kind] = factory


def build_backbone(spec: BackboneSpec) -> Backbone:
    """Build the backbone described by `spec`."""
    factory = _REGISTRY.get(spec.kind)
    if factory is None:
        msg = f"No backbone registered for kind '{spec.kind}'."
        raise InvalidArgumentError(msg)
    logger.debug("Building %s backbone with %d channels", spec.kind, spec.out_channels)
    return factory(spec)


register_backbone(BackboneKind.SYNTHETIC, SyntheticBackbone)
register_backbone(BackboneKind.FILE, FileBackbone)


def extract(spec: BackboneSpec, frame: Frame, roi: RoiWindow) -> FeatureMapSet:
    """One-shot extraction; builds the backbone from `spec` on every call."""
    return build_backbone(spec).extract(frame, roi)
