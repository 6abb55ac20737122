"""Audio ingestion, preprocessing, manifests and the synthetic corpus."""

from .dsp import (
    CLIP_SAMPLES,
    SAMPLE_RATE,
    Waveform,
    fit_length,
    normalize_peak,
    preprocess,
    preprocess_waveform,
    resample,
)
from .manifest import (
    AUTHENTICITY,
    MODELS,
    SPLITS,
    TECHNOLOGIES,
    Manifest,
    ManifestEntry,
    ManifestError,
    parse_manifest,
    read_manifest,
    resolve,
    select,
    write_manifest,
)
from .synth import SynthClass, SynthResult, SynthSpec, default_spec, synth_corpus
from .wav import WavFormatError, encode_pcm16, load_wav, parse_wav, write_wav


def load_entries(entries, manifest_path):
    """Preprocess every entry into a float32 array of shape (N, 48000)."""
    import numpy as np

    out = np.empty((len(entries), CLIP_SAMPLES), dtype=np.float32)
    for i, entry in enumerate(entries):
        out[i] = preprocess(resolve(entry, manifest_path)).samples
    return out
