# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

"""
FMT1 feature tensor files.

Layout, all little endian::

    magic     4 bytes   b"FMT1"
    version   u16       1
    rows      u32
    cols      u32
    channels  u32
    payload   rows * cols * channels float32, channel-major, row-major within a channel

Precomputed per-frame features live at ``<dir>/<task>/<frame index, 8 digits>.fmt1``.
"""

import struct
from pathlib import Path

import numpy as np

from fmst_tracker.domain.scoring import FeatureMapSet
from fmst_tracker.errors import TensorFormatError

MAGIC = b"FMT1"
VERSION = 1
SUFFIX = ".fmt1"

_HEADER = struct.Struct("<4sHIII")
_DTYPE = np.dtype("<f4")
# Refuse headers announcing more than 2**31 elements before allocating anything.
MAX_ELEMENTS = 2**31


def encode_tensor(features: FeatureMapSet) -> bytes:
    """Serialize a feature map set; values are stored as float32."""
    data = np.ascontiguousarray(features.data, dtype=_DTYPE)
    header = _HEADER.pack(MAGIC, VERSION, features.rows, features.cols, features.channels)
    return header + data.tobytes(order="C")


def decode_tensor(blob: bytes) -> FeatureMapSet:
    """Parse an FMT1 blob; any inconsistency raises TensorFormatError with the failing offset."""
    if len(blob) < _HEADER.size:
        msg = f"Truncated header: {len(blob)} of {_HEADER.size} bytes"
        raise TensorFormatError(msg, offset=len(blob))

    magic, version, rows, cols, channels = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        msg = f"Bad magic {magic!r}, expected {MAGIC!r}"
        raise TensorFormatError(msg, offset=0)
    if version != VERSION:
        msg = f"Unsupported version {version}"
        raise TensorFormatError(msg, offset=4)

    elements = rows * cols * channels
    if elements == 0 or elements > MAX_ELEMENTS:
        msg = f"Invalid dimensions {rows}x{cols}x{channels}"
        raise TensorFormatError(msg, offset=6)

    expected = _HEADER.size + elements * _DTYPE.itemsize
    if len(blob) != expected:
        kind = "Truncated" if len(blob) < expected else "Oversized"
        msg = f"{kind} payload: file has {len(blob)} bytes, header announces {expected}"
        raise TensorFormatError(msg, offset=min(len(blob), expected))

    data = np.frombuffer(blob, dtype=_DTYPE, offset=_HEADER.size).reshape(channels, rows, cols)
    return FeatureMapSet(data=data)


def store_tensor(path: Path, features: FeatureMapSet) -> None:
    """Write `features` to `path` as an FMT1 file."""
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(features))


def load_tensor(path: Path) -> FeatureMapSet:
    """Read an FMT1 file."""
    return decode_tensor(path.read_bytes())


def feature_path(root: Path, task: str, frame_index: int) -> Path:
    """
    Location of the precomputed features of one frame.

    >>> feature_path(Path("features"), "Basketball", 12).as_posix()
    'features/Basketball/00000012.fmt1'
    """
    return root / task / f"{frame_index:08d}{SUFFIX}"
