# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
FWN1 network checkpoints.

Layout, all little endian::

    magic          4 bytes  b"FWN1"
    version        u16      2
    layer count    u16
    input scaling  u16      0 = none, 1 = max_abs
    reserved       u16      0
    per layer:
        rows       u32      (output size)
        cols       u32      (input size)
        weight     rows * cols float32, row-major
        bias       rows float32

Version 1 files have no input scaling or reserved fields; they load as networks without
input scaling. The activations are fixed (ReLU hidden, ReLU6 output) and are not stored.
"""

import struct
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from fmst_tracker.errors import TensorFormatError
from fmst_tracker.weightnet.network import DenseLayer, DenseNet, InputScaling

MAGIC = b"FWN1"
VERSION = 2
POSITIVE_FILE = "positive.fwn1"
NEGATIVE_FILE = "negative.fwn1"

SCALING_CODES = {InputScaling.NONE: 0, InputScaling.MAX_ABS: 1}

_HEADER = struct.Struct("<4sHH")
_FLAGS = struct.Struct("<HH")
_LAYER = struct.Struct("<II")
_DTYPE = np.dtype("<f4")


def encode_net(net: DenseNet) -> bytes:
    """Serialize a network; parameters are stored as float32."""
    chunks = [_HEADER.pack(MAGIC, VERSION, len(net.layers)), _FLAGS.pack(SCALING_CODES[net.input_scaling], 0)]
    for layer in net.layers:
        chunks.append(_LAYER.pack(layer.fan_out, layer.fan_in))
        chunks.append(np.ascontiguousarray(layer.weight, dtype=_DTYPE).tobytes(order="C"))
        chunks.append(np.ascontiguousarray(layer.bias, dtype=_DTYPE).tobytes())
    return b"".join(chunks)


def _read_array(blob: bytes, offset: int, count: int) -> np.ndarray:
    end = offset + count * _DTYPE.itemsize
    if end > len(blob):
        msg = f"Truncated parameters: need {end} bytes, file has {len(blob)}"
        raise TensorFormatError(msg, offset=len(blob))
    return np.frombuffer(blob, dtype=_DTYPE, count=count, offset=offset).astype(np.float64)


def _read_scaling(blob: bytes, version: int) -> InputScaling:
    if version == 1:
        return InputScaling.NONE
    if len(blob) < _HEADER.size + _FLAGS.size:
        msg = f"Truncated header: {len(blob)} of {_HEADER.size + _FLAGS.size} bytes"
        raise TensorFormatError(msg, offset=len(blob))
    code, _ = _FLAGS.unpack_from(blob, _HEADER.size)
    for scaling, known in SCALING_CODES.items():
        if code == known:
            return scaling
    msg = f"Unknown input scaling code {code}"
    raise TensorFormatError(msg, offset=_HEADER.size)


def decode_net(blob: bytes) -> DenseNet:
    """Parse an FWN1 blob; any inconsistency raises TensorFormatError with the failing offset."""
    if len(blob) < _HEADER.size:
        msg = f"Truncated header: {len(blob)} of {_HEADER.size} bytes"
        raise TensorFormatError(msg, offset=len(blob))
    magic, version, layer_count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        msg = f"Bad magic {magic!r}, expected {MAGIC!r}"
        raise TensorFormatError(msg, offset=0)
    if version not in (1, VERSION):
        msg = f"Unsupported version {version}"
        raise TensorFormatError(msg, offset=4)
    if layer_count == 0:
        msg = "Checkpoint holds no layers"
        raise TensorFormatError(msg, offset=6)

    input_scaling = _read_scaling(blob, version)
    offset = _HEADER.size if version == 1 else _HEADER.size + _FLAGS.size
    layers = []
    for _ in range(layer_count):
        if offset + _LAYER.size > len(blob):
            msg = "Truncated layer header"
            raise TensorFormatError(msg, offset=len(blob))
        rows, cols = _LAYER.unpack_from(blob, offset)
        if rows == 0 or cols == 0:
            msg = f"Invalid layer shape {rows}x{cols}"
            raise TensorFormatError(msg, offset=offset)
        offset += _LAYER.size
        weight = _read_array(blob, offset, rows * cols).reshape(rows, cols)
        offset += rows * cols * _DTYPE.itemsize
        bias = _read_array(blob, offset, rows)
        offset += rows * _DTYPE.itemsize
        layers.append(DenseLayer(weight=weight, bias=bias))

    if offset != len(blob):
        msg = f"{len(blob) - offset} trailing bytes after the last layer"
        raise TensorFormatError(msg, offset=offset)
    return DenseNet(layers=tuple(layers), input_scaling=input_scaling)


def save_net(path: Path, net: DenseNet) -> None:
    """Write `net` to `path`."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_net(net))


def load_net(path: Path) -> DenseNet:
    """Read a network checkpoint."""
    return decode_net(path.read_bytes())


class WeightNets(BaseModel):
    """The independent positive and negative weight generators."""

    model_config = ConfigDict(frozen=True)

    positive: DenseNet
    negative: DenseNet | None = None

    def save(self, directory: Path) -> None:
        """Write ``positive.fwn1`` (and ``negative.fwn1`` when present) into `directory`."""
        save_net(directory / POSITIVE_FILE, self.positive)
        if self.negative is not None:
            save_net(directory / NEGATIVE_FILE, self.negative)

    @classmethod
    def load(cls, positive: Path, negative: Path | None = None) -> "WeightNets":
        """Load the generators from explicit checkpoint paths."""
        return cls(positive=load_net(positive), negative=load_net(negative) if negative is not None else None)

    @classmethod
    def load_dir(cls, directory: Path) -> "WeightNets":
        """Load the generators written by :meth:`save`; the negative one is optional."""
        negative = directory / NEGATIVE_FILE
        return cls.load(directory / POSITIVE_FILE, negative if negative.is_file() else None)
