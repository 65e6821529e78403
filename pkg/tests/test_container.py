import numpy as np
import pytest

from semgrasp import container


def _sample():
    arrays = {
        "b": np.arange(6, dtype=np.float64).reshape(2, 3),
        "a": np.array([1, 2, 3], dtype=np.int64),
        "m": np.array([0, 255], dtype=np.uint8),
    }
    meta = {"kind": "test", "n": 3, "x": 0.25}
    return arrays, meta


def test_roundtrip():
    arrays, meta = _sample()
    blob = container.to_bytes(arrays, meta)
    back, meta2 = container.from_bytes(blob)
    assert meta2 == meta
    assert set(back) == set(arrays)
    for k in arrays:
        assert back[k].dtype == arrays[k].dtype
        assert np.array_equal(back[k], arrays[k])


def test_serialization_is_deterministic():
    arrays, meta = _sample()
    b1 = container.to_bytes(arrays, meta)
    b2 = container.to_bytes(dict(reversed(list(arrays.items()))), dict(meta))
    assert b1 == b2


def test_file_roundtrip(tmp_path):
    arrays, meta = _sample()
    path = tmp_path / "x.sgb"
    sha = container.save(path, arrays, meta)
    back, meta2, sha2 = container.load(path)
    assert sha == sha2
    assert meta2 == meta
    assert np.array_equal(back["b"], arrays["b"])


def test_corruption_detected(tmp_path):
    arrays, meta = _sample()
    path = tmp_path / "x.sgb"
    container.save(path, arrays, meta)
    blob = bytearray(path.read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    with pytest.raises(container.ContainerError):
        container.from_bytes(bytes(blob))
    with pytest.raises(container.ContainerError):
        container.from_bytes(bytes(blob[:-40]))
    with pytest.raises(container.ContainerError):
        container.from_bytes(b"XXXXXXXX" + bytes(blob[8:]))


def test_float32_upcast_and_bad_dtype():
    blob = container.to_bytes({"f": np.ones(2, dtype=np.float32)}, {})
    back, _ = container.from_bytes(blob)
    assert back["f"].dtype == np.float64
    with pytest.raises(container.ContainerError):
        container.to_bytes({"c": np.ones(2, dtype=np.complex128)}, {})
