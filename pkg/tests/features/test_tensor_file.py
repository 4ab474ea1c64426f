# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

import re
import struct
from pathlib import Path

import numpy as np
import pytest

from fmst_tracker.domain.scoring import FeatureMapSet
from fmst_tracker.errors import TensorFormatError
from fmst_tracker.features.tensor_file import (
    MAGIC,
    decode_tensor,
    encode_tensor,
    feature_path,
    load_tensor,
    store_tensor,
)

HEADER_SIZE = 18


def _features(channels: int, rows: int, cols: int) -> FeatureMapSet:
    """Helper function to create random float32 features."""
    data = np.random.default_rng(channels).uniform(0, 4, size=(channels, rows, cols)).astype(np.float32)
    return FeatureMapSet(data=data)


def _header(rows: int, cols: int, channels: int, magic: bytes = MAGIC, version: int = 1) -> bytes:
    """Helper function to pack an FMT1 header."""
    return struct.pack("<4sHIII", magic, version, rows, cols, channels)


def test_store_and_load(tmp_path: Path) -> None:
    """Test that a 14x14x672 set survives a write and read bit for bit."""
    features = _features(672, 14, 14)
    path = tmp_path / "frame.fmt1"

    store_tensor(path, features)
    loaded = load_tensor(path)

    assert loaded.data.shape == (672, 14, 14)
    assert loaded.data.tobytes() == features.data.tobytes()
    assert path.stat().st_size == HEADER_SIZE + 672 * 14 * 14 * 4


def test_layout_is_channel_major() -> None:
    """Test the byte layout of the header and the payload order."""
    data = np.arange(12, dtype=np.float32).reshape(3, 2, 2)

    blob = encode_tensor(FeatureMapSet(data=data))

    assert blob[:HEADER_SIZE] == _header(2, 2, 3)
    assert np.frombuffer(blob[HEADER_SIZE:], dtype="<f4").tolist() == list(range(12))


def test_wrong_magic() -> None:
    """Test that a file with another magic is rejected at offset 0."""
    blob = _header(1, 1, 1, magic=b"FMT2") + b"\x00" * 4

    with pytest.raises(TensorFormatError, match=re.escape("Bad magic b'FMT2', expected b'FMT1' (at byte offset 0)")):
        _ = decode_tensor(blob)


def test_empty_file() -> None:
    """Test that an empty blob is a truncated header."""
    with pytest.raises(TensorFormatError, match=re.escape("Truncated header: 0 of 18 bytes")) as info:
        _ = decode_tensor(b"")

    assert info.value.offset == 0


def test_unsupported_version() -> None:
    """Test that an unknown version is rejected at the version field."""
    with pytest.raises(TensorFormatError, match=re.escape("Unsupported version 2 (at byte offset 4)")):
        _ = decode_tensor(_header(1, 1, 1, version=2) + b"\x00" * 4)


def test_dimension_overflow() -> None:
    """Test that a header announcing more than 2**31 elements is rejected before reading the payload."""
    with pytest.raises(TensorFormatError, match=re.escape("Invalid dimensions 65536x65536x2 (at byte offset 6)")):
        _ = decode_tensor(_header(65536, 65536, 2))


def test_zero_dimension() -> None:
    """Test that a header with a zero dimension is rejected."""
    with pytest.raises(TensorFormatError, match=re.escape("Invalid dimensions 0x14x8")):
        _ = decode_tensor(_header(0, 14, 8))


def test_truncated_payload() -> None:
    """Test that a short payload reports where the data ends."""
    blob = encode_tensor(_features(2, 3, 3))[:-4]

    with pytest.raises(TensorFormatError, match=re.escape("Truncated payload")) as info:
        _ = decode_tensor(blob)

    assert info.value.offset == len(blob)


def test_oversized_payload() -> None:
    """Test that trailing bytes after the payload are rejected."""
    blob = encode_tensor(_features(2, 3, 3)) + b"\x00"

    with pytest.raises(TensorFormatError, match=re.escape("Oversized payload")):
        _ = decode_tensor(blob)


def test_feature_path() -> None:
    """Test the per-frame feature file naming."""
    assert feature_path(Path("feats"), "Car4", 7) == Path("feats") / "Car4" / "00000007.fmt1"
