import struct

import numpy as np
import pytest

from lava.autoencoder import Autoencoder
from lava.checkpoint import (
    ARCH_AUTOENCODER,
    ARCH_ENCODER,
    CheckpointError,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    load_encoder,
    save_autoencoder,
    save_checkpoint,
    Checkpoint,
)


@pytest.fixture(scope="module")
def model():
    return Autoencoder(seed=3)


def test_roundtrip_bit_exact(model, tmp_path):
    path = tmp_path / "ae.lava"
    meta = {"beta": repr(1e-4), "seeds": {"autoencoder": 3}, "tau": "0.8500000000000001"}
    save_checkpoint(model.store.tensors, meta, path, ARCH_AUTOENCODER)
    ck = load_checkpoint(path)
    assert ck.arch == ARCH_AUTOENCODER and ck.meta == meta
    assert set(ck.tensors) == set(model.store.tensors)
    for name, value in model.store.tensors.items():
        assert ck.tensors[name].dtype == np.float32
        assert ck.tensors[name].tobytes() == value.astype("<f4").tobytes()
    # re-encoding the loaded container gives the same bytes
    assert encode_checkpoint(ck) == path.read_bytes()


def test_header_layout(model):
    data = encode_checkpoint(Checkpoint(ARCH_ENCODER, {}, dict(model.encoder_store().tensors)))
    assert data[:5] == b"LAVA1"
    (minor,) = struct.unpack("<H", data[5:7])
    assert minor >= 1


def test_wrong_version(model):
    data = bytearray(encode_checkpoint(Checkpoint(ARCH_ENCODER, {},
                                                  dict(model.encoder_store().tensors))))
    data[4:5] = b"9"
    with pytest.raises(CheckpointError) as exc:
        decode_checkpoint(bytes(data))
    assert exc.value.field == "version"


def test_bad_magic():
    with pytest.raises(CheckpointError) as exc:
        decode_checkpoint(b"RIFF1234567890")
    assert exc.value.field == "magic"


def test_truncation_names_field(model):
    data = encode_checkpoint(Checkpoint(ARCH_ENCODER, {}, dict(model.encoder_store().tensors)))
    with pytest.raises(CheckpointError) as exc:
        decode_checkpoint(data[:-7])
    assert "data" in exc.value.field
    with pytest.raises(CheckpointError) as exc:
        decode_checkpoint(data[:9])
    assert exc.value.field == "architecture"


def test_missing_required_tensor(model):
    tensors = dict(model.encoder_store().tensors)
    tensors.pop("encoder.10.weight")
    with pytest.raises(CheckpointError, match="encoder.10.weight") as exc:
        decode_checkpoint(encode_checkpoint(Checkpoint(ARCH_ENCODER, {}, tensors)))
    assert exc.value.field == "tensors"


def test_unknown_architecture():
    with pytest.raises(CheckpointError):
        decode_checkpoint(encode_checkpoint(Checkpoint("lava.mystery/1", {}, {})))


def test_autoencoder_helpers(model, tmp_path):
    save_autoencoder(model, tmp_path / "a.lava", 1e-4, 3)
    back, meta = load_encoder(tmp_path / "a.lava")
    assert meta["beta"] == "0.0001" and meta["bn_eps"] == "1e-05"
    x = np.random.default_rng(0).uniform(-1, 1, (1, 1, 1024)).astype(np.float32)
    np.testing.assert_array_equal(back.forward(x)[0], model.forward(x)[0])
