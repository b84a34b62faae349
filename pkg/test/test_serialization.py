import io

import numpy as np
import pytest

from pose_boost.errors import CheckpointError
from pose_boost.serialization import (
    MAGIC,
    Checkpoint,
    config_digest,
    dumps_checkpoint,
    load_checkpoint,
    loads_checkpoint,
    read_tensor,
    save_checkpoint,
    write_tensor,
)

# --- helpers ---------------------------------------------------------------


def _ckpt(order=("b", "a")) -> Checkpoint:
    rng = np.random.default_rng(0)
    tensors = {
        "a": rng.normal(size=(2, 3)).astype(np.float32),
        "b": rng.normal(size=(4,)),
    }
    return Checkpoint(config={"network": {"gamma": 0.1}, "seed": 3}, tensors={k: tensors[k] for k in order})


# --- tests ----------------------------------------------------------------


def test_checkpoint_preserves_values_and_dtypes(tmp_path):
    ckpt = _ckpt()
    path = save_checkpoint(tmp_path / "sub" / "m.ckpt", ckpt)
    loaded = load_checkpoint(path)
    assert loaded.config == ckpt.config
    assert loaded.tensors["a"].dtype == np.float32
    assert loaded.tensors["b"].dtype == np.float64
    np.testing.assert_array_equal(loaded.tensors["a"], ckpt.tensors["a"])
    np.testing.assert_array_equal(loaded.tensors["b"], ckpt.tensors["b"])
    assert loaded.digest == ckpt.digest


def test_file_bytes_independent_of_insertion_order():
    assert dumps_checkpoint(_ckpt(("a", "b"))) == dumps_checkpoint(_ckpt(("b", "a")))


def test_file_starts_with_magic_and_digest():
    ckpt = _ckpt()
    raw = dumps_checkpoint(ckpt)
    assert raw[:4] == MAGIC
    assert raw[4:36] == ckpt.digest


def test_digest_ignores_key_order():
    assert config_digest({"a": 1, "b": [1, 2]}) == config_digest({"b": [1, 2], "a": 1})
    assert config_digest({"a": 1}) != config_digest({"a": 2})


def test_bad_magic_rejected():
    raw = bytearray(dumps_checkpoint(_ckpt()))
    raw[0:4] = b"XXXX"
    with pytest.raises(CheckpointError):
        loads_checkpoint(bytes(raw))


def test_tampered_config_rejected():
    raw = dumps_checkpoint(_ckpt())
    tampered = raw.replace(b'"seed":3', b'"seed":4')
    assert tampered != raw
    with pytest.raises(CheckpointError):
        loads_checkpoint(tampered)


def test_truncated_file_rejected():
    raw = dumps_checkpoint(_ckpt())
    with pytest.raises(CheckpointError):
        loads_checkpoint(raw[:-3])


def test_missing_file_rejected(tmp_path):
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_scalar_tensor_record():
    buf = io.BytesIO()
    write_tensor(buf, np.array(2.5))
    buf.seek(0)
    out = read_tensor(buf)
    assert out.shape == ()
    assert float(out) == 2.5


def test_integer_arrays_not_serializable():
    with pytest.raises(CheckpointError):
        write_tensor(io.BytesIO(), np.array([1, 2], dtype=np.int64))
