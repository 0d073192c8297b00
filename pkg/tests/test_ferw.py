"""FERW container: byte layout, round-trip, and corruption handling."""

import io
import struct

import numpy as np
import pytest

from ferkit import ferw
from ferkit.errors import (
    BadMagicError,
    ChecksumError,
    ShapeError,
    UnsupportedVersionError,
    WeightFormatError,
)
from ferkit.model import build_model
from tests.test_model import small_dense_spec


@pytest.fixture
def model():
    return build_model(small_dense_spec(), seed=42)


def serialize(model) -> bytes:
    buf = io.BytesIO()
    ferw.save_weights(model, buf)
    return buf.getvalue()


def test_header_layout(model):
    data = serialize(model)
    assert data[:4] == b"FERW"
    version, manifest_len = struct.unpack_from("<II", data, 4)
    assert version == 1
    manifest = data[12 : 12 + manifest_len].decode("utf-8")
    assert '"layers"' in manifest and '"tensors"' in manifest and '"labels"' in manifest


def test_round_trip_bit_identical(model):
    loaded = ferw.load_weights(serialize(model))
    for name in model.params:
        np.testing.assert_array_equal(loaded.params[name], model.params[name])
    for name in model.stats:
        np.testing.assert_array_equal(loaded.stats[name], model.stats[name])
    assert loaded.spec == model.spec

    x = np.random.default_rng(0).random((2, 4, 4, 3), dtype=np.float32)
    np.testing.assert_array_equal(loaded.forward(x), model.forward(x))


def test_round_trip_via_path(model, tmp_path):
    path = tmp_path / "model.ferw"
    ferw.save_weights(model, path)
    loaded = ferw.load_weights(path)
    for name in model.params:
        np.testing.assert_array_equal(loaded.params[name], model.params[name])


def test_single_byte_corruption_detected(model):
    data = bytearray(serialize(model))
    data[len(data) // 2] ^= 0x01
    with pytest.raises(ChecksumError):
        ferw.load_weights(bytes(data))


def test_bad_magic(model):
    data = b"NOPE" + serialize(model)[4:]
    with pytest.raises(BadMagicError):
        ferw.load_weights(data)


def test_unsupported_version(model):
    data = bytearray(serialize(model))
    struct.pack_into("<I", data, 4, 99)
    # refresh the trailer so the version error is reached, not the checksum
    import zlib

    data[-4:] = struct.pack("<I", zlib.crc32(bytes(data[:-4])) & 0xFFFFFFFF)
    with pytest.raises(UnsupportedVersionError):
        ferw.load_weights(bytes(data))


def test_truncated_stream_is_structured_error(model):
    data = serialize(model)
    for cut in (2, 10, len(data) // 2, len(data) - 5):
        with pytest.raises(WeightFormatError):
            ferw.load_weights(data[:cut])


def test_manifest_tensor_shape_mismatch(model):
    # Declare a dense weight one column wider than the stored tensor.
    data = serialize(model)
    bad = data.replace(b'"shape": [48, 16]', b'"shape": [48, 17]', 1)
    assert bad != data
    import zlib

    bad = bad[:-4] + struct.pack("<I", zlib.crc32(bad[:-4]) & 0xFFFFFFFF)
    with pytest.raises((WeightFormatError, ShapeError), match="layers.1.weight"):
        ferw.load_weights(bad)


def test_file_size_tracks_parameter_count(model, tmp_path):
    path = tmp_path / "m.ferw"
    ferw.save_weights(model, path)
    tensor_bytes = 4 * model.parameter_count()
    overhead = path.stat().st_size - tensor_bytes
    assert 0 < overhead < 4096  # manifest, headers, checksum


def test_loads_non_default_manifest(model):
    """Any manifest over the supported layer kinds loads, not just the
    built-in architecture."""
    from ferkit.model import LayerSpec, ModelSpec

    spec = ModelSpec(
        input_shape=(12, 12, 3),
        layers=(
            LayerSpec("conv", {"kernel_size": 3, "out_channels": 4}),
            LayerSpec("relu"),
            LayerSpec("maxpool"),
            LayerSpec("batchnorm"),
            LayerSpec("flatten"),
            LayerSpec("dense", {"units": 8}),
            LayerSpec("softmax"),
        ),
    )
    custom = build_model(spec, 1)
    loaded = ferw.load_weights(serialize(custom))
    assert loaded.spec == spec
    probs = loaded.forward(np.zeros((1, 12, 12, 3), dtype=np.float32))
    np.testing.assert_allclose(probs.sum(), 1.0, atol=1e-6)
