"""Minimal RIFF/WAVE reader and PCM16 writer.

Reads PCM16, PCM24 and IEEE float32 with one or two channels. Parse errors
name the byte offset at which the file stopped making sense.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .dsp import Waveform

FORMAT_PCM = 1
FORMAT_FLOAT = 3
FORMAT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


def _decode(raw: bytes, fmt: int, bits: int, offset: int) -> np.ndarray:
    if fmt == FORMAT_PCM and bits == 16:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if fmt == FORMAT_PCM and bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        v = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        v = np.where(v >= 1 << 23, v - (1 << 24), v)
        return v.astype(np.float64) / float(1 << 23)
    if fmt == FORMAT_FLOAT and bits == 32:
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)
    raise WavFormatError(f"unsupported encoding: format tag {fmt}, {bits} bits", offset)


def parse_wav(data: bytes) -> Waveform:
    if len(data) < 12:
        raise WavFormatError("file too short for a RIFF header", len(data))
    if data[:4] != b"RIFF":
        raise WavFormatError(f"not a RIFF file (magic {data[:4]!r})", 0)
    if data[8:12] != b"WAVE":
        raise WavFormatError(f"RIFF form type {data[8:12]!r} is not WAVE", 8)

    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = pos + 8
        if cid == b"fmt ":
            if size < 16 or body + size > len(data):
                raise WavFormatError("truncated fmt chunk", pos)
            tag, channels, rate, _, block, bits = struct.unpack_from("<HHIIHH", data, body)
            if tag == FORMAT_EXTENSIBLE and size >= 40:
                (tag,) = struct.unpack_from("<H", data, body + 24)
            if tag not in (FORMAT_PCM, FORMAT_FLOAT):
                raise WavFormatError(f"unsupported format tag {tag}", body)
            if channels not in (1, 2):
                raise WavFormatError(f"unsupported channel count {channels}", body + 2)
            if rate == 0:
                raise WavFormatError("sample rate is zero", body + 4)
            if block != channels * bits // 8:
                raise WavFormatError(f"block align {block} inconsistent with "
                                     f"{channels} x {bits} bits", body + 12)
            fmt = (tag, channels, rate, bits, body)
        elif cid == b"data":
            if fmt is None:
                raise WavFormatError("data chunk before fmt chunk", pos)
            tag, channels, rate, bits, fmt_at = fmt
            if body + size > len(data):
                raise WavFormatError(f"data chunk declares {size} bytes but only "
                                     f"{len(data) - body} remain", pos + 4)
            block = channels * bits // 8
            if size % block:
                raise WavFormatError(f"data size {size} is not a multiple of the "
                                     f"{block}-byte frame", pos + 4)
            samples = _decode(data[body:body + size], tag, bits, fmt_at)
            samples = samples.reshape(-1, channels).mean(axis=1)
            return Waveform(samples.astype(np.float32), rate)
        pos = body + size + (size & 1)
    if fmt is None:
        raise WavFormatError("no fmt chunk", pos)
    raise WavFormatError("no data chunk", pos)


def load_wav(path) -> Waveform:
    return parse_wav(Path(path).read_bytes())


def encode_pcm16(samples: np.ndarray, rate: int) -> bytes:
    """Mono PCM16 bytes; amplitudes are clipped to [-1, 1] and scaled by 32767."""
    q = np.round(np.clip(samples, -1.0, 1.0) * 32767.0).astype("<i2")
    payload = q.tobytes()
    header = struct.pack("<4sI4s4sIHHIIHH4sI", b"RIFF", 36 + len(payload), b"WAVE",
                         b"fmt ", 16, FORMAT_PCM, 1, rate, rate * 2, 2, 16,
                         b"data", len(payload))
    return header + payload


def write_wav(path, samples: np.ndarray, rate: int) -> None:
    Path(path).write_bytes(encode_pcm16(samples, rate))
