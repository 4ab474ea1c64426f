# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Synthetic tracking sequences with exact ground truth.

A scene is a background, a colored target rectangle moving along a trajectory, optional
distractor rectangles and an optional vertical occluder bar. Rendering is deterministic:
the same :class:`SceneSpec` always produces the same pixels. Rectangles are rasterized with
the cell-center rule of :func:`fmst_tracker.domain.geometry.cell_span` at one pixel per cell,
so sub-pixel positions are drawn consistently with the target maps.

The :func:`archetype` scenes mirror situations known to be hard for this kind of tracker:
scale change, a same-colored distractor close to the target and a brief occlusion.
"""

import math
from collections.abc import Sequence
from enum import StrEnum
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from pydantic_core import InitErrorDetails

from fmst_tracker.bench.annotations import ANNOTATION_FILE, IMAGE_DIR, write_annotations
from fmst_tracker.domain.geometry import Rect, cell_span
from fmst_tracker.errors import InvalidArgumentError
from fmst_tracker.features.frame import Frame, write_frame
from fmst_tracker.validation import raise_for_errors, value_error

Color = tuple[int, int, int]

_COLOR_MAX = 255


class TrajectoryKind(StrEnum):
    """How a rectangle moves over time."""

    STATIC = "static"
    LINEAR = "linear"
    SINUSOIDAL = "sinusoidal"
    SCALE_RAMP = "scale_ramp"


class BackgroundKind(StrEnum):
    """Background pattern."""

    FLAT = "flat"
    CHECKERBOARD = "checkerboard"
    NOISE = "noise"


class Trajectory(BaseModel):
    """
    Center and size of a rectangle as a function of the frame number ``t``.

    - ``static``: fixed center and size.
    - ``linear``: the center moves by ``(vx, vy)`` pixels per frame.
    - ``sinusoidal``: the center oscillates by ``amplitude * sin(2 pi t / period)``.
    - ``scale_ramp``: fixed center, both sides grow by the factor ``1 + scale_rate`` per frame.
    """

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    kind: TrajectoryKind = TrajectoryKind.STATIC
    x: float
    y: float
    w: float = Field(gt=0)
    h: float = Field(gt=0)
    vx: float = 0.0
    vy: float = 0.0
    amplitude_x: float = 0.0
    amplitude_y: float = 0.0
    period: float = Field(default=50.0, gt=0)
    scale_rate: float = Field(default=0.0, gt=-1)

    def rect_at(self, t: int) -> Rect:
        """The rectangle at frame `t` (0 based)."""
        match self.kind:
            case TrajectoryKind.STATIC:
                return Rect(x=self.x, y=self.y, w=self.w, h=self.h)
            case TrajectoryKind.LINEAR:
                return Rect(x=self.x + self.vx * t, y=self.y + self.vy * t, w=self.w, h=self.h)
            case TrajectoryKind.SINUSOIDAL:
                phase = math.sin(2 * math.pi * t / self.period)
                return Rect(
                    x=self.x + self.amplitude_x * phase, y=self.y + self.amplitude_y * phase, w=self.w, h=self.h
                )
            case TrajectoryKind.SCALE_RAMP:
                factor = (1.0 + self.scale_rate) ** t
                return Rect(x=self.x, y=self.y, w=self.w * factor, h=self.h * factor)


class SceneObject(BaseModel):
    """A filled rectangle following a trajectory."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    trajectory: Trajectory
    color: Color = (220, 40, 40)


class Occluder(BaseModel):
    """A full-height vertical bar drawn over everything in frames ``[start, stop)``."""

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    x: float
    width: float = Field(gt=0)
    start: int = Field(ge=0)
    stop: int = Field(ge=0)
    color: Color = (90, 90, 90)


def _check_color(color: Color, field: str) -> list[InitErrorDetails]:
    if any(not 0 <= channel <= _COLOR_MAX for channel in color):
        return [value_error("Color channels must lie in [0, 255].", field, color)]
    return []


def validate_scene_spec(spec: "SceneSpec") -> list[InitErrorDetails] | None:
    """
    Validates a scene.

    The following constraints are enforced:

    - Every color channel must lie in [0, 255].
    - The target must stay at least one pixel inside the image in every frame.
    - The occluder frame range must not be reversed.
    """
    validation_errors: list[InitErrorDetails] = []

    validation_errors.extend(_check_color(spec.background_color, "background_color"))
    validation_errors.extend(_check_color(spec.target.color, "target"))
    for distractor in spec.distractors:
        validation_errors.extend(_check_color(distractor.color, "distractors"))

    for t in range(spec.frames):
        rect = spec.target.trajectory.rect_at(t)
        if rect.left < 1 or rect.top < 1 or rect.right > spec.width - 1 or rect.bottom > spec.height - 1:
            validation_errors.append(
                value_error(f"The target leaves the image in frame {t}.", "target", rect.to_top_left())
            )
            break

    if spec.occluder is not None:
        validation_errors.extend(_check_color(spec.occluder.color, "occluder"))
        if spec.occluder.stop < spec.occluder.start:
            validation_errors.append(
                value_error("The occluder must not stop before it starts.", "occluder", spec.occluder.stop)
            )

    return validation_errors or None


class SceneSpec(BaseModel):
    """Everything needed to render one synthetic sequence."""

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    width: int = Field(default=320, ge=8)
    height: int = Field(default=240, ge=8)
    target: SceneObject
    distractors: tuple[SceneObject, ...] = ()
    background: BackgroundKind = BackgroundKind.FLAT
    background_color: Color = (110, 120, 110)
    checker_size: int = Field(default=16, ge=1)
    noise_level: float = Field(default=20.0, ge=0, description="Spread of the seeded background noise.")
    pixel_noise: float = Field(default=0.0, ge=0, description="Standard deviation of per-frame sensor noise.")
    occluder: Occluder | None = None
    frames: int = Field(default=10, ge=2)
    seed: int = Field(default=0, ge=0)

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_scene_spec)

    @property
    def image_size(self) -> tuple[int, int]:
        return (self.width, self.height)


def _background(spec: SceneSpec, rng: np.random.Generator) -> np.ndarray:
    base = np.empty((spec.height, spec.width, 3), dtype=np.float64)
    base[:] = spec.background_color
    match spec.background:
        case BackgroundKind.FLAT:
            pass
        case BackgroundKind.CHECKERBOARD:
            rows, cols = np.indices((spec.height, spec.width))
            dark = ((rows // spec.checker_size + cols // spec.checker_size) % 2).astype(bool)
            base[dark] *= 0.6
        case BackgroundKind.NOISE:
            base += rng.uniform(-spec.noise_level, spec.noise_level, size=base.shape)
    return base


def _paint(image: np.ndarray, rect: Rect, color: Color) -> None:
    rows, cols = image.shape[:2]
    c0, c1 = cell_span(rect.left, rect.right, cols, cols)
    r0, r1 = cell_span(rect.top, rect.bottom, rows, rows)
    image[r0:r1, c0:c1] = color


def render(spec: SceneSpec) -> tuple[list[Frame], list[Rect]]:
    """Render all frames and the exact ground-truth rect of each frame."""
    rng = np.random.default_rng(spec.seed)
    background = _background(spec, rng)

    frames: list[Frame] = []
    truths: list[Rect] = []
    for t in range(spec.frames):
        image = background.copy()
        for distractor in spec.distractors:
            _paint(image, distractor.trajectory.rect_at(t), distractor.color)
        truth = spec.target.trajectory.rect_at(t)
        _paint(image, truth, spec.target.color)

        occluder = spec.occluder
        if occluder is not None and occluder.start <= t < occluder.stop:
            _paint(image, Rect(x=occluder.x, y=spec.height / 2, w=occluder.width, h=spec.height), occluder.color)

        if spec.pixel_noise > 0:
            image += rng.normal(0.0, spec.pixel_noise, size=image.shape)

        pixels = np.clip(np.rint(image), 0, _COLOR_MAX).astype(np.uint8)
        frames.append(Frame(pixels=pixels, index=t))
        truths.append(truth)
    return frames, truths


def write_otb(directory: Path, frames: Sequence[Frame], truths: Sequence[Rect]) -> None:
    """Write a sequence in the OTB layout: ``img/0001.png, ...`` and ``groundtruth_rect.txt``."""
    if len(frames) != len(truths):
        msg = f"Got {len(frames)} frames but {len(truths)} ground-truth rects."
        raise InvalidArgumentError(msg)
    for number, frame in enumerate(frames, start=1):
        write_frame(directory / IMAGE_DIR / f"{number:04d}.png", frame)
    write_annotations(directory / ANNOTATION_FILE, truths)


def load_scene(path: Path) -> SceneSpec:
    """Read a JSON scene description."""
    return SceneSpec.model_validate_json(path.read_text(encoding="utf-8"))


ARCHETYPES = ("static", "linear", "sinusoidal", "scale_ramp", "distractor", "occlusion")


def archetype(name: str, frames: int = 100, seed: int = 0) -> SceneSpec:
    """
    A ready-made scene of the named kind on a 320x240 noise background.

    Displacements are fixed over the whole sequence, so the per-frame motion shrinks as
    `frames` grows. At the default length every moving target travels well under half of the
    default sampler's center spread per frame (``0.01 * 80`` pixels for an 80x60 target).
    ``distractor`` places a second rectangle of the target's color next to its path and
    ``occlusion`` hides the target behind a bar for a few frames in the middle.
    """
    if name not in ARCHETYPES:
        msg = f"Unknown scene archetype '{name}'; choose one of {', '.join(ARCHETYPES)}."
        raise InvalidArgumentError(msg)

    target = Trajectory(x=160.0, y=120.0, w=80.0, h=60.0)
    drift = {"kind": TrajectoryKind.LINEAR, "x": 136.0, "y": 114.0, "vx": 24.0 / frames, "vy": 12.0 / frames}
    distractors: tuple[SceneObject, ...] = ()
    occluder = None
    match name:
        case "linear":
            target = target.model_copy(update=drift)
        case "sinusoidal":
            target = target.model_copy(
                update={
                    "kind": TrajectoryKind.SINUSOIDAL,
                    "amplitude_x": 5.0,
                    "amplitude_y": 3.0,
                    "period": float(frames),
                }
            )
        case "scale_ramp":
            target = target.model_copy(
                update={"kind": TrajectoryKind.SCALE_RAMP, "w": 40.0, "h": 30.0, "scale_rate": 0.01}
            )
        case "distractor":
            target = target.model_copy(update=drift)
            distractors = (SceneObject(trajectory=Trajectory(x=280.0, y=205.0, w=40.0, h=30.0)),)
        case "occlusion":
            target = target.model_copy(update=drift)
            occluder = Occluder(x=148.0, width=10.0, start=frames // 2, stop=frames // 2 + 3)
        case _:
            pass

    return SceneSpec(
        target=SceneObject(trajectory=target),
        distractors=distractors,
        background=BackgroundKind.NOISE,
        occluder=occluder,
        frames=frames,
        seed=seed,
    )


def synthetic_suite(count: int = 10, frames: int = 100, seed: int = 0) -> list[tuple[str, SceneSpec]]:
    """``count`` named scenes cycling through the moving archetypes, each with its own seed."""
    moving = ARCHETYPES[1:]
    return [
        (f"{moving[i % len(moving)]}-{i:02d}", archetype(moving[i % len(moving)], frames, seed + i))
        for i in range(count)
    ]
