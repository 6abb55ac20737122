"""LAVA1 checkpoint container.

Layout (all integers little-endian)::

    b"LAVA" + version digit (b"1")   5 bytes
    format minor version           u16
    architecture id                u16 length + UTF-8
    metadata                       u32 length + UTF-8 JSON (sorted keys)
    tensor count                   u32
    per tensor: name (u16 length + UTF-8), ndim u8, dims u32 * ndim,
                float32 values, C order

Thresholds and other floats that must survive exactly are stored in the
metadata as decimal strings.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"LAVA"
VERSION = b"1"
MINOR = 1

ARCH_AUTOENCODER = "lava.autoencoder/1"
ARCH_ENCODER = "lava.encoder/1"
ARCH_HEAD = "lava.head/1"


class CheckpointError(ValueError):
    def __init__(self, message: str, field_name: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class Checkpoint:
    arch: str
    meta: dict
    tensors: dict[str, np.ndarray] = field(default_factory=dict)


def required_tensors(arch: str, meta: dict) -> list[str]:
    from .autoencoder import DECODER_SPECS, ENCODER_SPECS
    from .heads import PRIVATE, attention_specs, classifier_specs
    from .kernel import Sequential

    enc = Sequential(ENCODER_SPECS, "encoder").param_names()
    if arch == ARCH_ENCODER:
        return enc
    if arch == ARCH_AUTOENCODER:
        return enc + Sequential(DECODER_SPECS, "decoder").param_names()
    if arch == ARCH_HEAD:
        names = [f"{PRIVATE}.weight", f"{PRIVATE}.bias"]
        if meta.get("attention", True):
            names += Sequential(attention_specs(), "attention").param_names()
        n = len(meta.get("vocabulary", ()))
        return names + Sequential(classifier_specs(n), "classifier").param_names()
    raise CheckpointError(f"unknown architecture {arch!r}", "architecture")


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    out = bytearray(MAGIC + VERSION)
    out += struct.pack("<H", MINOR)
    arch = ckpt.arch.encode("utf-8")
    out += struct.pack("<H", len(arch)) + arch
    meta = json.dumps(ckpt.meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    out += struct.pack("<I", len(meta)) + meta
    out += struct.pack("<I", len(ckpt.tensors))
    for name in sorted(ckpt.tensors):
        value = np.ascontiguousarray(ckpt.tensors[name], dtype="<f4")
        raw = name.encode("utf-8")
        out += struct.pack("<H", len(raw)) + raw
        out += struct.pack("<B", value.ndim)
        out += struct.pack(f"<{value.ndim}I", *value.shape)
        out += value.tobytes()
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"truncated at byte {self.pos} (needed {n} more)", what)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_checkpoint(data: bytes) -> Checkpoint:
    r = _Reader(data)
    head = r.take(5, "magic")
    if head[:4] != MAGIC:
        raise CheckpointError(f"bad magic {head!r}", "magic")
    if head[4:] != VERSION:
        raise CheckpointError(f"unsupported format version {head[4:].decode(errors='replace')!r}",
                              "version")
    (minor,) = r.unpack("<H", "minor_version")
    if minor > MINOR:
        raise CheckpointError(f"minor version {minor} is newer than {MINOR}", "version")
    (n,) = r.unpack("<H", "architecture")
    arch = r.take(n, "architecture").decode("utf-8")
    (n,) = r.unpack("<I", "metadata")
    try:
        meta = json.loads(r.take(n, "metadata").decode("utf-8"))
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"invalid JSON ({exc.msg})", "metadata") from None
    (count,) = r.unpack("<I", "tensor_count")
    tensors = {}
    for _ in range(count):
        (n,) = r.unpack("<H", "tensor_name")
        name = r.take(n, "tensor_name").decode("utf-8")
        (ndim,) = r.unpack("<B", f"tensor[{name}].ndim")
        shape = r.unpack(f"<{ndim}I", f"tensor[{name}].shape")
        size = int(np.prod(shape)) if ndim else 1
        raw = r.take(4 * size, f"tensor[{name}].data")
        tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)
    if r.pos != len(data):
        raise CheckpointError(f"{len(data) - r.pos} trailing bytes", "end_of_file")
    missing = [t for t in required_tensors(arch, meta) if t not in tensors]
    if missing:
        raise CheckpointError(f"missing tensors for {arch}: {missing}", "tensors")
    return Checkpoint(arch, meta, tensors)


def save_checkpoint(tensors: dict, meta: dict, path, arch: str) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(encode_checkpoint(Checkpoint(arch, meta, dict(tensors))))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


# -- model-level helpers --------------------------------------------------

def _bn_meta() -> dict:
    from .kernel import BN_EPS, BN_MOMENTUM
    return {"bn_eps": repr(BN_EPS), "bn_momentum": repr(BN_MOMENTUM)}


def save_autoencoder(model, path, beta: float, seed: int, extra: dict | None = None) -> None:
    arch = ARCH_AUTOENCODER if model.has_decoder() else ARCH_ENCODER
    meta = {"beta": repr(float(beta)), "seeds": {"autoencoder": seed}, **_bn_meta(),
            **(extra or {})}
    save_checkpoint(model.store.tensors, meta, path, arch)


def load_encoder(path):
    """Load an autoencoder or encoder-only checkpoint into an ``Autoencoder``."""
    from .autoencoder import Autoencoder
    from .kernel import ParamStore

    ckpt = load_checkpoint(path)
    if ckpt.arch not in (ARCH_AUTOENCODER, ARCH_ENCODER):
        raise CheckpointError(f"expected an autoencoder checkpoint, got {ckpt.arch}",
                              "architecture")
    store = ParamStore()
    for name, value in ckpt.tensors.items():
        stat = name.rsplit(".", 1)[-1] in ("running_mean", "running_var")
        store.add(name, value, not stat)
    return Autoencoder(store), ckpt.meta


def head_meta(head, seed: int, beta: float, threshold=None) -> dict:
    meta = {"level": head.spec.level, "vocabulary": list(head.vocabulary),
            "attention": head.spec.attention, "beta": repr(float(beta)),
            "seeds": {"head": seed}, **_bn_meta()}
    if threshold is not None:
        meta["threshold"] = threshold.to_dict()
    return meta


def save_head(head, path, meta: dict) -> None:
    save_checkpoint(head.own_tensors(), meta, path, ARCH_HEAD)


def load_head(path, encoder_store):
    """Returns ``(Head, RejectionThreshold | None, meta)``."""
    from .heads import Head, HeadSpec
    from .rejection import RejectionThreshold

    ckpt = load_checkpoint(path)
    if ckpt.arch != ARCH_HEAD:
        raise CheckpointError(f"expected a head checkpoint, got {ckpt.arch}", "architecture")
    meta = ckpt.meta
    spec = HeadSpec.for_level(meta["level"], bool(meta["attention"]))
    if list(spec.vocabulary) != list(meta["vocabulary"]):
        raise CheckpointError("vocabulary does not match the level", "metadata.vocabulary")
    head = Head(spec, encoder_store, own=ckpt.tensors)
    th = meta.get("threshold")
    return head, (RejectionThreshold.from_dict(th) if th else None), meta
