# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
Run configuration.

All settings are pydantic models. On disk they are written as flat ``key = value`` lines with
dotted keys addressing nested models::

    # tracker settings
    tracker.mode = learned
    tracker.eta = 0.99
    tracker.sampler.sigma_xy = 0.01
    tracker.map_types = S
    tracker.backbone.out_channels = 672
    train.max_epochs = 50

Values are parsed by pydantic, unknown keys are rejected, and :func:`dump_config` writes a
resolved configuration in the same format so that it can be fed back through ``--config``.
"""

from collections.abc import Iterable, Mapping
from enum import StrEnum
from pathlib import Path
from typing import Any

from pydantic import BaseModel, ConfigDict, Field
from pydantic_core import InitErrorDetails

from fmst_tracker.domain.candidates import DEFAULT_OFFSET, SamplerParams
from fmst_tracker.domain.targetmaps import MapType
from fmst_tracker.errors import InvalidArgumentError
from fmst_tracker.features.backbone import BackboneSpec
from fmst_tracker.validation import raise_for_errors, value_error
from fmst_tracker.weightnet.training import TrainConfig

_LIST_KEYS = frozenset({"tracker.map_types", "train.hidden_dims"})
_NONE = "none"


class TrackerMode(StrEnum):
    """Classic hard top-fraction selection, or weights from the learned generators."""

    FMST_HARD = "fmst_hard"
    LEARNED = "learned"


class NetInput(StrEnum):
    """Which score vector the learned generators consume."""

    AVERAGE = "average"
    INSTANT = "instant"


def validate_tracker_config(config: "TrackerConfig") -> list[InitErrorDetails] | None:
    """
    Validates a tracker configuration.

    - At least one target map type must be active.
    - A negative network checkpoint requires a positive one.
    """
    validation_errors: list[InitErrorDetails] = []

    if not config.map_types:
        validation_errors.append(value_error("At least one target map type must be active.", "map_types", None))

    if config.negative_net is not None and config.positive_net is None:
        validation_errors.append(
            value_error("A negative network requires a positive network.", "negative_net", str(config.negative_net))
        )

    return validation_errors or None


class TrackerConfig(BaseModel):
    """Hyperparameters of a tracking run."""

    model_config = ConfigDict(frozen=True, extra="forbid", allow_inf_nan=False)

    mode: TrackerMode = TrackerMode.LEARNED
    eta: float = Field(default=0.99, ge=0, le=1)
    selection_fraction: float = Field(default=0.1, gt=0, le=1)
    sampler: SamplerParams = SamplerParams()
    b: float = DEFAULT_OFFSET
    alpha: float = Field(default=0.5, ge=0)
    map_types: frozenset[MapType] = frozenset({MapType.S})
    use_negative: bool | None = Field(default=None, description="None: on in learned mode, off in hard mode.")
    net_input: NetInput = NetInput.AVERAGE
    backbone: BackboneSpec = BackboneSpec()
    positive_net: Path | None = None
    negative_net: Path | None = None

    def model_post_init(self, context: object, /) -> None:
        raise_for_errors(self, validate_tracker_config)

    @property
    def negative_active(self) -> bool:
        """Negative maps only take part in learned mode; hard selection ignores them."""
        if self.mode is TrackerMode.FMST_HARD:
            return False
        return self.use_negative if self.use_negative is not None else True

    @property
    def ordered_map_types(self) -> tuple[MapType, ...]:
        """Active map types in a fixed order, so map summation is reproducible."""
        return tuple(sorted(self.map_types, key=lambda kind: list(MapType).index(kind)))


class RunConfig(BaseModel):
    """Everything a CLI run can be configured with."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tracker: TrackerConfig = TrackerConfig()
    train: TrainConfig = TrainConfig()


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Parse ``key = value`` lines into a flat mapping; ``#`` starts a comment."""
    entries: dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            msg = f"{source}:{number}: expected 'key = value', got {raw.strip()!r}."
            raise InvalidArgumentError(msg)
        entries[key.strip()] = value.strip()
    return entries


def _coerce(key: str, value: object) -> object:
    if not isinstance(value, str):
        return value
    if value.lower() == _NONE:
        return None
    if key in _LIST_KEYS:
        return [item.strip() for item in value.split(",") if item.strip()]
    return value


def _nest(flat: Mapping[str, object]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        *parents, leaf = key.split(".")
        node = nested
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                msg = f"Config key '{key}' conflicts with a value set for '{part}'."
                raise InvalidArgumentError(msg)
            node = child
        node[leaf] = _coerce(key, value)
    return nested


def build_config(flat: Mapping[str, object]) -> RunConfig:
    """Validate a flat dotted-key mapping into a :class:`RunConfig`."""
    return RunConfig.model_validate(_nest(flat))


def load_config(path: Path | None, overrides: Mapping[str, object] | None = None) -> RunConfig:
    """Read a config file (optional) and apply dotted-key overrides on top of it."""
    flat: dict[str, object] = {}
    if path is not None:
        flat.update(parse_config_text(path.read_text(encoding="utf-8"), source=str(path)))
    flat.update({key: value for key, value in (overrides or {}).items() if value is not None})
    return build_config(flat)


def _format(key: str, value: object) -> str:
    if value is None:
        return _NONE
    if isinstance(value, list):
        items = [str(item) for item in value]
        # map_types is a set; its dump order must not depend on hashing.
        return ",".join(sorted(items) if key == "tracker.map_types" else items)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _flatten(prefix: str, node: Mapping[str, object]) -> Iterable[tuple[str, str]]:
    for key, value in node.items():
        dotted = f"{prefix}.{key}" if prefix else key
        if isinstance(value, Mapping):
            yield from _flatten(dotted, value)
        else:
            yield dotted, _format(dotted, value)


def flatten_config(config: RunConfig) -> dict[str, str]:
    """The flat dotted-key form of a configuration."""
    return dict(_flatten("", config.model_dump(mode="json")))


def dump_config(config: RunConfig) -> str:
    """Render a configuration in the ``key = value`` file format."""
    lines = ["# resolved fmst-tracker configuration"]
    lines.extend(f"{key} = {value}" for key, value in flatten_config(config).items())
    return "\n".join(lines) + "\n"
