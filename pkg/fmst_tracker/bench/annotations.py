# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
OTB-style sequence directories.

A task directory holds ``groundtruth_rect.txt`` with one ``x,y,w,h`` line per frame, where
``x, y`` is the top-left corner, and the frames as ``img/0001.jpg`` (or ``.png``). Fields may
be separated by commas, tabs or spaces. Rects are converted to the center convention on
ingestion.
"""

import re
from collections.abc import Sequence
from pathlib import Path

from pydantic import BaseModel, ConfigDict, ValidationError
from pydantic_core import InitErrorDetails

from fmst_tracker.domain.geometry import Rect
from fmst_tracker.errors import AnnotationParseError
from fmst_tracker.features.frame import Frame, read_frame
from fmst_tracker.validation import raise_for_errors, value_error

ANNOTATION_FILE = "groundtruth_rect.txt"
IMAGE_DIR = "img"
IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png")

_SEPARATOR = re.compile(r"[,\t ]+")
_FIELDS = 4


def validate_sequence_annotation(annotation: "SequenceAnnotation") -> list[InitErrorDetails] | None:
    """
    Validates a sequence annotation.

    - There must be as many ground-truth rects as image files.
    - The sequence must have at least two frames.
    """
    validation_errors: list[InitErrorDetails] = []

    if len(annotation.truths) != len(annotation.images):
        validation_errors.append(
            value_error(
                f"Found {len(annotation.truths)} ground-truth rects for {len(annotation.images)} images.",
                "truths",
                len(annotation.truths),
            )
        )
    if len(annotation.truths) < 2:  # noqa: PLR2004
        validation_errors.append(
            value_error("A sequence needs at least two annotated frames.", "truths", len(annotation.truths))
        )

    return validation_errors or None


class SequenceAnnotation(BaseModel):
    """One benchmark task: its name, per-frame ground truth and frame images."""

    model_config = ConfigDict(frozen=True)

    name: str
    truths: tuple[Rect, ...]
    images: tuple[Path, ...]

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_sequence_annotation)

    def __len__(self) -> int:
        return len(self.truths)

    def frames(self) -> list[Frame]:
        """Read every frame image."""
        return [read_frame(path, index) for index, path in enumerate(self.images)]


def parse_rect_line(line: str, line_number: int) -> Rect:
    """
    Parse one top-left ``x,y,w,h`` line into a center-based rect.

    >>> parse_rect_line("10,20,30,40", 1)
    Rect(x=25.0, y=40.0, w=30.0, h=40.0)
    """
    fields = [field for field in _SEPARATOR.split(line.strip()) if field]
    if len(fields) != _FIELDS:
        msg = f"expected 4 fields 'x,y,w,h', got {len(fields)}"
        raise AnnotationParseError(msg, line_number)
    try:
        left, top, w, h = (float(field) for field in fields)
    except ValueError as err:
        msg = f"non-numeric field in {line.strip()!r}"
        raise AnnotationParseError(msg, line_number) from err
    try:
        return Rect.from_top_left(left, top, w, h)
    except ValidationError as err:
        msg = f"invalid rect {line.strip()!r}: width and height must be positive and finite"
        raise AnnotationParseError(msg, line_number) from err


def parse_annotations(text: str) -> list[Rect]:
    """Parse a ground-truth file body; blank lines are skipped but still counted."""
    return [parse_rect_line(line, number) for number, line in enumerate(text.splitlines(), start=1) if line.strip()]


def format_rect_line(rect: Rect) -> str:
    """
    The top-left ``x,y,w,h`` line of a rect, readable by :func:`parse_rect_line`.

    >>> format_rect_line(Rect(x=25, y=40, w=30, h=40))
    '10,20,30,40'
    """
    return ",".join(f"{value:.10g}" for value in rect.to_top_left())


def write_annotations(path: Path, rects: Sequence[Rect]) -> None:
    """Write one rect per line in the ground-truth format."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(format_rect_line(rect) + "\n" for rect in rects), encoding="utf-8")


def list_images(directory: Path) -> list[Path]:
    """Frame images of a task in name order."""
    image_dir = directory / IMAGE_DIR
    if not image_dir.is_dir():
        return []
    return sorted(path for path in image_dir.iterdir() if path.suffix.lower() in IMAGE_SUFFIXES)


def load_annotations(directory: Path) -> SequenceAnnotation:
    """Read an OTB-style task directory; the task is named after the directory."""
    text = (directory / ANNOTATION_FILE).read_text(encoding="utf-8")
    truths = tuple(parse_annotations(text))
    return SequenceAnnotation(name=directory.name, truths=truths, images=tuple(list_images(directory)))


def find_tasks(root: Path) -> list[Path]:
    """Task directories directly below `root`, recognised by their ground-truth file."""
    return sorted(path for path in root.iterdir() if (path / ANNOTATION_FILE).is_file())
