"""Deterministic synthetic corpus with the three-technology / six-model label layout.

Each sample is a jittered glottal pulse train shaped by random formants and
a syllabic envelope, scaled to unit RMS, then passed through its class
recipe: additive noise floor, brick-wall band limit, feed-forward comb
resonance and finally a uniform quantizer. Adding the noise before the band
limit leaves an empty band above the cutoff. Quantizing last keeps a class with ``L`` levels at no
more than ``L`` distinct sample values on disk.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .dsp import SAMPLE_RATE
from .manifest import MODELS, ManifestEntry, write_manifest
from .wav import encode_pcm16

SPLIT_ORDER = ("train", "val", "test")
CODEC_LEVELS = (256, 64, 32, 16, 12, 8)
CODEC_COMBS = (160.0, 320.0, 480.0, 640.0, 800.0, 960.0)
CODEC_NOISE = (0.015, 0.030, 0.045, 0.060, 0.075, 0.090)
TECH_CUTOFFS = {"ASV": 7000.0, "FoR": 5000.0, "Codec": 3000.0}


@dataclass(frozen=True)
class SynthClass:
    """One generating source: its labels, artifact recipe and per-split counts."""

    source: str
    technology: str | None
    model: str | None
    authenticity: str
    cutoff_hz: float          # >= Nyquist disables the band limit
    levels: int               # 0 disables the quantizer
    comb_hz: float            # 0 disables the comb
    noise_floor: float       # std relative to the unit-RMS source
    counts: tuple[int, int, int] = (0, 0, 0)
    holdout: bool = False     # listed in the generalization manifest instead

    def recipe(self) -> tuple[float, int, float, float]:
        return (self.cutoff_hz, self.levels, self.comb_hz, self.noise_floor)


@dataclass(frozen=True)
class SynthSpec:
    classes: tuple[SynthClass, ...]
    seed: int = 0
    min_length: int = 40000
    max_length: int = 56000

    def __post_init__(self):
        recipes = [c.recipe() for c in self.classes]
        if len(set(recipes)) != len(recipes):
            raise ValueError("every class needs a distinct recipe")
        sources = [c.source for c in self.classes]
        if len(set(sources)) != len(sources):
            raise ValueError("duplicate source names")
        for c in self.classes:
            if any(n < 0 for n in c.counts):
                raise ValueError(f"negative count for {c.source}")
            if c.levels == 1 or c.levels < 0:
                raise ValueError(f"{c.source}: quantizer needs at least 2 levels")

    def to_dict(self) -> dict:
        return asdict(self)


def _split_even(total: int, parts: int) -> list[int]:
    q, r = divmod(total, parts)
    return [q + (i < r) for i in range(parts)]


def default_spec(train=300, val=100, test=100, real_test=100, unseen_test=100,
                 seed=0) -> SynthSpec:
    """Balanced per technology; the Codec counts are spread over F01-F06."""
    classes = [
        SynthClass("ASV", "ASV", None, "fake", TECH_CUTOFFS["ASV"], 2048, 0.0, 0.30,
                   (train, val, test)),
        SynthClass("FoR", "FoR", None, "fake", TECH_CUTOFFS["FoR"], 1024, 0.0, 0.03,
                   (train, val, test)),
    ]
    per_split = [_split_even(n, len(MODELS)) for n in (train, val, test)]
    for i, model in enumerate(MODELS):
        classes.append(SynthClass(
            model, "Codec", model, "fake", TECH_CUTOFFS["Codec"], CODEC_LEVELS[i],
            CODEC_COMBS[i], CODEC_NOISE[i], tuple(s[i] for s in per_split)))
    classes.append(SynthClass("real", None, None, "real", SAMPLE_RATE / 2, 0, 0.0, 0.015,
                              (0, 0, real_test)))
    classes.append(SynthClass("unseen", "Codec", None, "fake", 4000.0, 48, 700.0, 0.09,
                              (0, 0, unseen_test), holdout=True))
    return SynthSpec(tuple(classes), seed=seed)


def _source_key(source: str) -> int:
    return zlib.crc32(source.encode("utf-8"))


def sample_rng(seed: int, source: str, split: str, index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(seed, spawn_key=(_source_key(source),
                                                 SPLIT_ORDER.index(split), index))
    return np.random.default_rng(ss)


def _voice(rng: np.random.Generator, n: int, rate: int) -> np.ndarray:
    """Pulse train at a wandering pitch, shaped by three random formants."""
    f0 = rng.uniform(90.0, 260.0)
    t = np.arange(n) / rate
    pitch = f0 * (1 + 0.03 * np.sin(2 * np.pi * rng.uniform(3, 6) * t + rng.uniform(0, 6.3)))
    phase = np.cumsum(pitch) / rate
    pulses = np.diff(np.floor(phase), prepend=0.0)
    pulses += 0.05 * rng.standard_normal(n)            # aspiration

    spec = np.fft.rfft(pulses)
    freqs = np.fft.rfftfreq(n, 1 / rate)
    env = 0.3 + np.zeros_like(freqs)
    for _ in range(3):
        centre = rng.uniform(300, 3500)
        width = rng.uniform(80, 400)
        env += rng.uniform(0.4, 1.0) * np.exp(-0.5 * ((freqs - centre) / width) ** 2)
    x = np.fft.irfft(spec * env, n)

    syll = rng.uniform(2.0, 5.0)
    x *= 0.55 + 0.45 * np.sin(2 * np.pi * syll * t + rng.uniform(0, 6.3))
    return x


def render_sample(cls: SynthClass, rng: np.random.Generator, n: int,
                  rate: int = SAMPLE_RATE) -> np.ndarray:
    x = _voice(rng, n, rate)
    x /= max(np.std(x), 1e-12)
    x += cls.noise_floor * rng.standard_normal(n)
    if cls.cutoff_hz < rate / 2:
        spec = np.fft.rfft(x)
        spec[np.fft.rfftfreq(n, 1 / rate) > cls.cutoff_hz] = 0
        x = np.fft.irfft(spec, n)
    if cls.comb_hz > 0:
        delay = int(round(rate / cls.comb_hz))
        x[delay:] += 0.9 * x[:-delay].copy()
    x *= 0.9 / max(np.max(np.abs(x)), 1e-12)
    x = np.clip(x, -1.0, 1.0)
    if cls.levels:
        step = 2.0 / (cls.levels - 1)
        x = -1.0 + step * np.round((x + 1.0) / step)
    return x


@dataclass
class SynthResult:
    root: Path
    manifest_path: Path
    generalization_path: Path
    entries: list[ManifestEntry] = field(default_factory=list)
    holdout: list[ManifestEntry] = field(default_factory=list)


def synth_corpus(spec: SynthSpec, out_dir) -> SynthResult:
    """Write WAV files plus ``manifest.jsonl`` and ``generalization.jsonl``.

    The bytes on disk depend only on ``spec``; each sample draws from its own
    seed stream keyed by (source, split, index).
    """
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    entries, holdout = [], []
    for cls in spec.classes:
        for split, count in zip(SPLIT_ORDER, cls.counts):
            if not count:
                continue
            folder = root / "audio" / cls.source / split
            folder.mkdir(parents=True, exist_ok=True)
            for i in range(count):
                rng = sample_rng(spec.seed, cls.source, split, i)
                n = int(rng.integers(spec.min_length, spec.max_length + 1))
                x = render_sample(cls, rng, n)
                rel = Path("audio") / cls.source / split / f"{cls.source}_{split}_{i:04d}.wav"
                (root / rel).write_bytes(encode_pcm16(x, SAMPLE_RATE))
                entry = ManifestEntry(rel.as_posix(), cls.technology, cls.model,
                                      cls.authenticity, split)
                (holdout if cls.holdout else entries).append(entry)
    manifest_path = root / "manifest.jsonl"
    generalization_path = root / "generalization.jsonl"
    write_manifest(entries, manifest_path)
    write_manifest(holdout, generalization_path)
    (root / "synth_spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
    return SynthResult(root, manifest_path, generalization_path, entries, holdout)
