# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Plumbing for validator functions.

Validators in this package follow one shape: they receive a constructed model and return
``list[InitErrorDetails] | None``, collecting every violated constraint instead of stopping
at the first one. Models call :func:`raise_for_errors` from ``model_post_init`` so that a
non-empty list surfaces as a single ``pydantic.ValidationError``.
"""

from collections.abc import Callable
from typing import Any

from pydantic import BaseModel, ValidationError
from pydantic_core import InitErrorDetails, PydanticCustomError


def value_error(message: str, field: str, value: Any) -> InitErrorDetails:  # noqa: ANN401
    """Build the error details for a single violated constraint on `field`."""
    return InitErrorDetails(
        type=PydanticCustomError("value_error", message),
        loc=(field,),
        input=value,
        ctx={},
    )


def raise_for_errors[M: BaseModel](model: M, validator: Callable[[M], list[InitErrorDetails] | None]) -> None:
    """Run `validator` against `model` and raise a ValidationError if it reports anything."""
    errors = validator(model)
    if errors:
        raise ValidationError.from_exception_data(type(model).__name__, errors)
