# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Exceptions raised by the tracking engine.

Model construction problems (a rect with a negative width, a config with an out of range
smoothing coefficient) surface as ``pydantic.ValidationError``. The classes below cover the
failures that happen while operating on already valid values.
"""


class FmstError(Exception):
    """Base class for all tracking engine errors."""


class InvalidArgumentError(FmstError, ValueError):
    """An argument is outside the domain of the operation."""


class InvalidRectError(InvalidArgumentError):
    """A rectangle does not describe a non-empty, finite box."""


class ShapeError(FmstError, ValueError):
    """Operands have incompatible shapes."""


class ContractViolationError(FmstError):
    """An input does not satisfy a precondition the caller is responsible for."""


class MissingFeatureError(FmstError, LookupError):
    """No precomputed feature tensor is available for a frame."""


class EmptyDatasetError(FmstError):
    """An operation received no usable sequences, pairs or tasks."""


class TensorFormatError(FmstError):
    """A binary tensor or checkpoint file could not be decoded."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class AnnotationParseError(FmstError):
    """A ground-truth annotation line could not be parsed."""

    def __init__(self, message: str, line_number: int) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number
