# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Target maps over the ROI.

A target map is a signed mask at feature-map resolution that says which cells are target
(+1), which are non-target (-1) and which are ignored (0). Two geometries exist:

- Type C: +1 on the target, -1 on every other cell of the ROI.
- Type S: +1 on the target, -1 on the ring obtained by doubling the target rect in both
  directions, 0 outside that ring.

Maps are rasterized directly at feature-map resolution with the cell-center rule of
:func:`fmst_tracker.domain.geometry.cell_span`; no image resize is involved.
"""

from enum import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict
from pydantic_core import InitErrorDetails

from fmst_tracker.domain.geometry import Rect, RoiWindow, cell_span
from fmst_tracker.errors import InvalidArgumentError
from fmst_tracker.validation import raise_for_errors, value_error


class MapType(StrEnum):
    """Target map geometry."""

    C = "C"
    S = "S"


class Polarity(StrEnum):
    """Whether the map rewards the target (positive) or everything but the target (negative)."""

    POSITIVE = "positive"
    NEGATIVE = "negative"


def validate_target_map(target_map: "TargetMap") -> list[InitErrorDetails] | None:
    """
    Validates the entries of a target map.

    The following constraints are enforced:

    - The values must be a non-empty two dimensional matrix.
    - Every entry must be one of -1, 0 and +1.
    - A Type C map must not contain 0 entries.
    """
    validation_errors: list[InitErrorDetails] = []
    values = target_map.values

    if values.ndim != 2 or values.size == 0:  # noqa: PLR2004
        validation_errors.append(
            value_error("The target map must be a non-empty two dimensional matrix.", "values", values.shape)
        )
        return validation_errors

    if not np.isin(values, (-1.0, 0.0, 1.0)).all():
        validation_errors.append(value_error("Every target map entry must be one of -1, 0 and +1.", "values", None))

    if target_map.kind is MapType.C and (values == 0).any():
        validation_errors.append(value_error("A Type C target map must not contain 0 entries.", "values", None))

    return validation_errors or None


class TargetMap(BaseModel):
    """A signed mask over the ROI at feature-map resolution."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    values: np.ndarray
    kind: MapType
    polarity: Polarity = Polarity.POSITIVE

    def model_post_init(self, context: object, /) -> None:
        """Check the map entries and freeze the underlying array."""
        raise_for_errors(self, validate_target_map)
        self.values.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        rows, cols = self.values.shape
        return (rows, cols)


def _check_resolution(resolution: tuple[int, int]) -> tuple[int, int]:
    rows, cols = resolution
    if rows < 1 or cols < 1:
        msg = f"Target map resolution must be at least 1x1, got {rows}x{cols}."
        raise InvalidArgumentError(msg)
    return rows, cols


def _fill(values: np.ndarray, roi: RoiWindow, region: Rect, value: float) -> None:
    """Set the cells of `values` whose centers fall inside `region` to `value`."""
    rows, cols = values.shape
    left, top, right, bottom = roi.window_edges(region)
    col_start, col_stop = cell_span(left, right, roi.bounds.w, cols)
    row_start, row_stop = cell_span(top, bottom, roi.bounds.h, rows)
    values[row_start:row_stop, col_start:col_stop] = value


def make_type_c(roi: RoiWindow, target: Rect, resolution: tuple[int, int]) -> TargetMap:
    """+1 on cells covered by `target`, -1 on all other cells of the ROI."""
    rows, cols = _check_resolution(resolution)
    values = np.full((rows, cols), -1.0)
    _fill(values, roi, target, 1.0)
    return TargetMap(values=values, kind=MapType.C)


def make_type_s(roi: RoiWindow, target: Rect, resolution: tuple[int, int]) -> TargetMap:
    """+1 on cells covered by `target`, -1 on the surrounding doubled rect, 0 elsewhere."""
    rows, cols = _check_resolution(resolution)
    values = np.zeros((rows, cols))
    doubled = Rect(x=target.x, y=target.y, w=2 * target.w, h=2 * target.h)
    _fill(values, roi, doubled, -1.0)
    _fill(values, roi, target, 1.0)
    return TargetMap(values=values, kind=MapType.S)


def make_target_map(kind: MapType, roi: RoiWindow, target: Rect, resolution: tuple[int, int]) -> TargetMap:
    """Dispatch to :func:`make_type_c` or :func:`make_type_s`."""
    if kind is MapType.C:
        return make_type_c(roi, target, resolution)
    return make_type_s(roi, target, resolution)


def negate(target_map: TargetMap) -> TargetMap:
    """Entrywise negation of a positive map, yielding the matching negative map."""
    if target_map.polarity is Polarity.NEGATIVE:
        msg = "Cannot negate a map that is already negative."
        raise InvalidArgumentError(msg)
    return TargetMap(values=-target_map.values, kind=target_map.kind, polarity=Polarity.NEGATIVE)


def with_polarity(target_map: TargetMap, polarity: Polarity) -> TargetMap:
    """Return the positive map unchanged or its negation."""
    if polarity is Polarity.POSITIVE:
        return target_map
    return negate(target_map)
