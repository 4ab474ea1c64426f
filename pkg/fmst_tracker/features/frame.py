# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""Video frames as handed to the backbone."""

from collections.abc import Sequence
from pathlib import Path

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic_core import InitErrorDetails

from fmst_tracker.domain.geometry import Rect
from fmst_tracker.validation import raise_for_errors, value_error


def validate_frame(frame: "Frame") -> list[InitErrorDetails] | None:
    """
    Validates that the frame holds a non-empty 8-bit RGB image.

    - The pixels must be a (rows, cols, 3) array with at least one pixel.
    - The pixels must be of dtype uint8.
    """
    validation_errors: list[InitErrorDetails] = []
    pixels = frame.pixels

    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.shape[0] == 0 or pixels.shape[1] == 0:  # noqa: PLR2004
        validation_errors.append(
            value_error("The frame must be a non-empty (rows, cols, 3) image.", "pixels", pixels.shape)
        )

    if pixels.dtype != np.uint8:
        validation_errors.append(value_error("The frame pixels must be 8-bit.", "pixels", str(pixels.dtype)))

    return validation_errors or None


class Frame(BaseModel):
    """One RGB image of a sequence with its frame number."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    pixels: np.ndarray
    index: int = Field(default=0, ge=0)

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_frame)

    @property
    def image_size(self) -> tuple[int, int]:
        """``(width, height)`` in pixels."""
        return (int(self.pixels.shape[1]), int(self.pixels.shape[0]))


def read_frame(path: Path, index: int) -> Frame:
    """Read an image file as an RGB frame."""
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        msg = f"Cannot read image {path}."
        raise FileNotFoundError(msg)
    return Frame(pixels=cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB), index=index)


def write_frame(path: Path, frame: Frame) -> None:
    """Write a frame as an image file; the format follows the suffix."""
    path.parent.mkdir(parents=True, exist_ok=True)
    if not cv2.imwrite(str(path), cv2.cvtColor(frame.pixels, cv2.COLOR_RGB2BGR)):
        msg = f"Cannot write image {path}."
        raise OSError(msg)


def draw_rects(frame: Frame, rects: Sequence[tuple[Rect, tuple[int, int, int]]], thickness: int = 2) -> Frame:
    """A copy of `frame` with each ``(rect, rgb color)`` outlined."""
    pixels = frame.pixels.copy()
    for rect, color in rects:
        top_left = (round(rect.left), round(rect.top))
        bottom_right = (round(rect.right) - 1, round(rect.bottom) - 1)
        cv2.rectangle(pixels, top_left, bottom_right, color, thickness)
    return Frame(pixels=pixels, index=frame.index)
