"""Waveform container and the preprocessing chain.

load -> resample to 16 kHz -> peak-normalize -> trim/pad to 48,000 samples.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

SAMPLE_RATE = 16000
CLIP_SAMPLES = 48000

KAISER_BETA = 8.0
ZERO_CROSSINGS = 32
CUTOFF_FRACTION = 0.9


@dataclass(frozen=True, eq=False)
class Waveform:
    samples: np.ndarray
    rate: int
    silent: bool = False

    @property
    def length(self) -> int:
        return int(self.samples.shape[0])

    @property
    def duration(self) -> float:
        return self.length / self.rate


def resample(w: Waveform, target: int = SAMPLE_RATE, chunk: int = 4096) -> Waveform:
    """Band-limited resampling with a Kaiser-windowed sinc kernel.

    Cutoff is 0.9 of the lower Nyquist frequency; the kernel spans 32 zero
    crossings on each side. Samples outside the signal are treated as zero.
    """
    if target <= 0:
        raise ValueError(f"target rate must be positive, got {target}")
    if w.rate <= 0:
        raise ValueError(f"source rate must be positive, got {w.rate}")
    if w.rate == target:
        return w

    x = np.asarray(w.samples, dtype=np.float64)
    n_out = int(round(w.length * target / w.rate))
    cutoff = CUTOFF_FRACTION * min(w.rate, target) / 2
    # kernel in units of input samples: h(d) = 2fc/r * sinc(2fc/r * d) * kaiser(d / half)
    fc = cutoff / w.rate
    half = ZERO_CROSSINGS / (2 * fc)
    reach = int(np.ceil(half))
    offsets = np.arange(-reach, reach + 1)
    norm = np.i0(KAISER_BETA)

    out = np.empty(n_out)
    xp = np.concatenate([np.zeros(reach + 1), x, np.zeros(reach + 2)])
    for start in range(0, n_out, chunk):
        n = np.arange(start, min(start + chunk, n_out))
        u = n * (w.rate / target)
        base = np.floor(u).astype(np.int64)
        idx = base[:, None] + offsets[None, :]
        d = u[:, None] - idx
        ratio = np.clip(d / half, -1.0, 1.0)
        win = np.i0(KAISER_BETA * np.sqrt(1.0 - ratio * ratio)) / norm
        win[np.abs(d) > half] = 0.0
        h = 2 * fc * np.sinc(2 * fc * d) * win
        out[start:start + n.size] = np.einsum("ij,ij->i", h, xp[idx + reach + 1])
    return Waveform(out.astype(np.float32), target, w.silent)


def normalize_peak(w: Waveform) -> Waveform:
    """Scale so max |x| == 1. All-zero input comes back unchanged with ``silent`` set."""
    peak = float(np.max(np.abs(w.samples))) if w.length else 0.0
    if peak == 0.0:
        return replace(w, silent=True)
    samples = w.samples / w.samples.dtype.type(peak)
    return Waveform(samples, w.rate, False)


def fit_length(w: Waveform, n: int = CLIP_SAMPLES) -> Waveform:
    """Keep the first ``n`` samples, or append zeros up to ``n``."""
    if w.rate != SAMPLE_RATE:
        raise ValueError(f"fit_length expects {SAMPLE_RATE} Hz audio, got {w.rate}")
    if w.length == n:
        return w
    if w.length > n:
        return replace(w, samples=w.samples[:n].copy())
    samples = np.zeros(n, dtype=w.samples.dtype)
    samples[:w.length] = w.samples
    return replace(w, samples=samples)


def preprocess_waveform(w: Waveform) -> Waveform:
    return fit_length(normalize_peak(resample(w, SAMPLE_RATE)), CLIP_SAMPLES)


def preprocess(path) -> Waveform:
    from .wav import load_wav

    return preprocess_waveform(load_wav(path))
