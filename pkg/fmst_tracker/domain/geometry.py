# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Bounding-box and ROI arithmetic.

Rectangles are center based: ``x`` and ``y`` are the center column and row in image pixels,
``w`` and ``h`` the full width and height. Annotation files use the top-left convention and
are converted on ingestion with :meth:`Rect.from_top_left`.

All areas are computed in real arithmetic. The only rasterization rule in the package is
:func:`cell_span`: a grid cell belongs to a region iff its center lies in the half-open
interval ``[lo, hi)``.
"""

import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from fmst_tracker.errors import InvalidRectError

ROI_SCALE = 2.0
SNAP_TOLERANCE = 1e-9


class Rect(BaseModel):
    """A center-based, axis-aligned box in image pixels."""

    model_config = ConfigDict(frozen=True, allow_inf_nan=False)

    x: float
    y: float
    w: float = Field(gt=0)
    h: float = Field(gt=0)

    @classmethod
    def from_top_left(cls, left: float, top: float, w: float, h: float) -> "Rect":
        """
        Build a rect from the top-left annotation convention.

        >>> Rect.from_top_left(10, 20, 30, 40)
        Rect(x=25.0, y=40.0, w=30.0, h=40.0)
        """
        return cls(x=left + w / 2, y=top + h / 2, w=w, h=h)

    @property
    def left(self) -> float:
        return self.x - self.w / 2

    @property
    def top(self) -> float:
        return self.y - self.h / 2

    @property
    def right(self) -> float:
        return self.x + self.w / 2

    @property
    def bottom(self) -> float:
        return self.y + self.h / 2

    @property
    def area(self) -> float:
        return self.w * self.h

    def to_top_left(self) -> tuple[float, float, float, float]:
        """Return ``(left, top, w, h)``."""
        return (self.left, self.top, self.w, self.h)

    def is_valid(self) -> bool:
        """Whether the rect satisfies its invariants (rects built with ``model_construct`` may not)."""
        values = (self.x, self.y, self.w, self.h)
        return all(math.isfinite(v) for v in values) and self.w > 0 and self.h > 0


class RoiWindow(BaseModel):
    """The crop window fed to the backbone: the target rect doubled in each direction."""

    model_config = ConfigDict(frozen=True)

    bounds: Rect
    image_size: tuple[int, int] = Field(description="(width, height) of the source image in pixels")

    @property
    def half_side(self) -> float:
        """Half of the longer window side, the distance normalizer of candidate confidence."""
        return max(self.bounds.w, self.bounds.h) / 2

    def to_image(self, u: float, v: float) -> tuple[float, float]:
        """Map a window-relative point (origin at the window's top-left corner) to image coordinates."""
        return (self.bounds.left + u, self.bounds.top + v)

    def to_window(self, x: float, y: float) -> tuple[float, float]:
        """Map an image point to window-relative coordinates."""
        return (x - self.bounds.left, y - self.bounds.top)

    def window_edges(self, region: Rect) -> tuple[float, float, float, float]:
        """
        Window-relative ``(left, top, right, bottom)`` of `region`.

        Edges are taken from the sizes and the center offset, so a region centered on the
        window keeps its edges exactly at ``(W - w) / 2`` and ``(W + w) / 2``.
        """
        left = (self.bounds.w - region.w) / 2 + (region.x - self.bounds.x)
        top = (self.bounds.h - region.h) / 2 + (region.y - self.bounds.y)
        right = (self.bounds.w + region.w) / 2 + (region.x - self.bounds.x)
        bottom = (self.bounds.h + region.h) / 2 + (region.y - self.bounds.y)
        return (left, top, right, bottom)


def make_roi(target: Rect, image_size: tuple[int, int]) -> RoiWindow:
    """
    Cut the region of interest around `target`.

    The window is centered on the target with twice its width and height. Parts outside the
    image are filled by edge replication when the crop is taken, so the window keeps its size.
    """
    if not target.is_valid():
        msg = f"Cannot build a ROI around an invalid rect {target!r}."
        raise InvalidRectError(msg)

    bounds = Rect(x=target.x, y=target.y, w=ROI_SCALE * target.w, h=ROI_SCALE * target.h)
    return RoiWindow(bounds=bounds, image_size=image_size)


def iou(a: Rect, b: Rect) -> float:
    """
    Intersection over union of two rects; 0 when they are disjoint.

    >>> iou(Rect(x=0.5, y=0.5, w=1, h=1), Rect(x=1.0, y=0.5, w=1, h=1))
    0.3333333333333333
    """
    inter_w = min(a.right, b.right) - max(a.left, b.left)
    inter_h = min(a.bottom, b.bottom) - max(a.top, b.top)
    if inter_w <= 0 or inter_h <= 0:
        return 0.0
    intersection = inter_w * inter_h
    # Areas from the same edge arithmetic, so identical rects give exactly 1.
    area_a = (a.right - a.left) * (a.bottom - a.top)
    area_b = (b.right - b.left) * (b.bottom - b.top)
    return intersection / (area_a + area_b - intersection)


def center_distance(a: Rect, b: Rect) -> float:
    """Euclidean distance between the centers of `a` and `b` in pixels."""
    return math.hypot(a.x - b.x, a.y - b.y)


def _ceil_snapped(value: float) -> int:
    nearest = round(value)
    if abs(value - nearest) <= SNAP_TOLERANCE:
        return nearest
    return math.ceil(value)


def cell_span(lo: float, hi: float, extent: float, n_cells: int) -> tuple[int, int]:
    """
    Half-open index range ``[start, stop)`` of the cells whose centers lie in ``[lo, hi)``.

    ``extent`` is divided into ``n_cells`` equal cells; cell ``i`` has its center at
    ``(i + 0.5) * extent / n_cells``. The range is clipped to ``[0, n_cells]``. An edge within
    ``SNAP_TOLERANCE`` cells of a cell center counts as lying exactly on it.

    >>> cell_span(0.25, 0.75, 1.0, 4)
    (1, 3)
    >>> cell_span(3 * 0.1, 0.6, 0.6, 1)
    (0, 1)
    """
    start = _ceil_snapped(lo * n_cells / extent - 0.5)
    stop = _ceil_snapped(hi * n_cells / extent - 0.5)
    start = min(max(start, 0), n_cells)
    stop = min(max(stop, start), n_cells)
    return (start, stop)


def _ceil_snapped_array(values: np.ndarray) -> np.ndarray:
    nearest = np.rint(values)
    return np.where(np.abs(values - nearest) <= SNAP_TOLERANCE, nearest, np.ceil(values))


def cell_spans(
    lo: np.ndarray, hi: np.ndarray, extent: float, n_cells: int
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`cell_span` over arrays of interval bounds."""
    start = np.clip(_ceil_snapped_array(lo * n_cells / extent - 0.5), 0, n_cells).astype(np.intp)
    stop = np.clip(_ceil_snapped_array(hi * n_cells / extent - 0.5), 0, n_cells).astype(np.intp)
    return start, np.maximum(stop, start)
