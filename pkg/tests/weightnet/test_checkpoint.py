# SPDX-FileCopyrightText: Contributors to fmst-tracker
#
# SPDX-License-Identifier: Apache-2.0

import re
import struct
from pathlib import Path

import numpy as np
import pytest

from fmst_tracker.domain.scoring import ScoreVector
from fmst_tracker.errors import TensorFormatError
from fmst_tracker.weightnet.checkpoint import (
    NEGATIVE_FILE,
    POSITIVE_FILE,
    WeightNets,
    decode_net,
    encode_net,
    load_net,
    save_net,
)
from fmst_tracker.weightnet.network import DenseLayer, DenseNet, InputScaling, forward, init_net


def test_save_and_load(tmp_path: Path) -> None:
    """Test that a checkpoint restores the float32 parameters of every layer."""
    net = init_net((6, 9, 6), np.random.default_rng(0))
    path = tmp_path / "net.fwn1"

    save_net(path, net)
    loaded = load_net(path)

    assert loaded.layer_dims == (6, 9, 6)
    for original, restored in zip(net.parameters(), loaded.parameters(), strict=True):
        np.testing.assert_array_equal(restored, original.astype(np.float32).astype(np.float64))


def test_layout() -> None:
    """Test the header and the first layer header of an encoded network."""
    net = init_net((3, 2, 3), np.random.default_rng(1))

    blob = encode_net(net)

    assert blob[:12] == b"FWN1" + struct.pack("<HHHH", 2, 2, 1, 0)
    assert struct.unpack_from("<II", blob, 12) == (2, 3)
    assert len(blob) == 12 + (8 + 4 * (2 * 3 + 2)) + (8 + 4 * (3 * 2 + 3))


@pytest.mark.parametrize("scaling", list(InputScaling))
def test_input_scaling_is_restored(tmp_path: Path, scaling: InputScaling) -> None:
    """Test that a loaded network prepares its input the way the saved one did."""
    net = init_net((4, 6, 4), np.random.default_rng(5), input_scaling=scaling)
    scores = ScoreVector(scores=np.array([40.0, -12.0, 3.0, 0.5]))

    save_net(tmp_path / "net.fwn1", net)
    loaded = load_net(tmp_path / "net.fwn1")

    assert loaded.input_scaling is scaling
    np.testing.assert_allclose(forward(loaded, scores).weights, forward(net, scores).weights, atol=1e-5)


def test_version_one_loads_without_scaling() -> None:
    """Test that a checkpoint without the input scaling field feeds raw scores to the first layer."""
    layer = DenseLayer(weight=np.eye(2, dtype=np.float32).astype(np.float64), bias=np.zeros(2))
    body = struct.pack("<II", 2, 2) + layer.weight.astype("<f4").tobytes() + layer.bias.astype("<f4").tobytes()

    net = decode_net(b"FWN1" + struct.pack("<HH", 1, 1) + body)

    assert net.input_scaling is InputScaling.NONE
    assert forward(net, ScoreVector(scores=np.array([3.0, -1.0]))).weights.tolist() == [3.0, 0.0]


def test_unknown_input_scaling() -> None:
    """Test that an unknown input scaling code is rejected at its offset."""
    blob = bytearray(encode_net(DenseNet(layers=(DenseLayer(weight=np.eye(2), bias=np.zeros(2)),))))
    blob[8:10] = struct.pack("<H", 7)

    with pytest.raises(TensorFormatError, match=re.escape("Unknown input scaling code 7 (at byte offset 8)")):
        _ = decode_net(bytes(blob))


def test_truncated_input_scaling() -> None:
    """Test that a version 2 header cut before the input scaling field is rejected."""
    with pytest.raises(TensorFormatError, match=re.escape("Truncated header: 9 of 12 bytes")):
        _ = decode_net(b"FWN1" + struct.pack("<HH", 2, 1) + b"\x01")


def test_bad_magic() -> None:
    """Test that a blob with another magic is rejected."""
    blob = b"FMT1" + encode_net(init_net((2, 2), np.random.default_rng(0)))[4:]

    with pytest.raises(TensorFormatError, match=re.escape("Bad magic b'FMT1', expected b'FWN1' (at byte offset 0)")):
        _ = decode_net(blob)


def test_no_layers() -> None:
    """Test that a checkpoint without layers is rejected."""
    with pytest.raises(TensorFormatError, match=re.escape("Checkpoint holds no layers (at byte offset 6)")):
        _ = decode_net(b"FWN1" + struct.pack("<HH", 2, 0))


def test_truncated_parameters() -> None:
    """Test that a checkpoint cut inside the parameters is rejected."""
    blob = encode_net(init_net((4, 4), np.random.default_rng(0)))[:-3]

    with pytest.raises(TensorFormatError, match=re.escape("Truncated parameters")) as info:
        _ = decode_net(blob)

    assert info.value.offset == len(blob)


def test_trailing_bytes() -> None:
    """Test that bytes after the last layer are rejected."""
    blob = encode_net(init_net((4, 4), np.random.default_rng(0))) + b"\x00\x00"

    with pytest.raises(TensorFormatError, match=re.escape("2 trailing bytes after the last layer")):
        _ = decode_net(blob)


def test_empty_file() -> None:
    """Test that an empty blob is a truncated header."""
    with pytest.raises(TensorFormatError, match=re.escape("Truncated header: 0 of 8 bytes")):
        _ = decode_net(b"")


def test_weight_nets_directory(tmp_path: Path) -> None:
    """Test that both generators are written and found again by directory."""
    rng = np.random.default_rng(2)
    nets = WeightNets(positive=init_net((4, 4, 4), rng), negative=init_net((4, 4, 4), rng))

    nets.save(tmp_path)
    loaded = WeightNets.load_dir(tmp_path)

    assert (tmp_path / POSITIVE_FILE).is_file()
    assert (tmp_path / NEGATIVE_FILE).is_file()
    assert loaded.negative is not None
    assert loaded.negative.layer_dims == (4, 4, 4)


def test_weight_nets_without_negative(tmp_path: Path) -> None:
    """Test that the negative generator is optional."""
    WeightNets(positive=init_net((4, 4), np.random.default_rng(3))).save(tmp_path)

    loaded = WeightNets.load_dir(tmp_path)

    assert not (tmp_path / NEGATIVE_FILE).exists()
    assert loaded.negative is None
