"""Attention-gated classification heads on top of the frozen encoder.

A head owns a private copy of the encoder's last convolution
(``final_conv.*``), an optional 1x1-conv sigmoid gate (``attention.*``) and a
pooled MLP classifier (``classifier.*``). Every other encoder tensor is
shared and frozen, and encoder batch norms always run in eval mode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoder import ENCODER_SPECS, FINAL_CONV, LATENT_CHANNELS
from .corpus import MODELS, TECHNOLOGIES, load_entries, select
from .kernel import (
    ParamStore,
    Sequential,
    ShapeError,
    act,
    conv,
    cross_entropy,
    linear,
    LayerSpec,
    softmax,
)
from .training import ConfigError, FitResult, TrainConfig, batches, fit

LEVELS = {"ADA": TECHNOLOGIES, "ADMR": MODELS}
HIDDEN = 128
PRIVATE = "final_conv"


def label_of(entry, level: str) -> str | None:
    return entry.technology if level == "ADA" else entry.model


@dataclass(frozen=True)
class HeadSpec:
    level: str
    vocabulary: tuple[str, ...]
    attention: bool = True

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ValueError(f"unknown level {self.level!r}")
        if len(self.vocabulary) < 2:
            raise ValueError("a head needs at least two classes")

    @classmethod
    def for_level(cls, level: str, attention: bool = True) -> HeadSpec:
        level = level.upper()
        return cls(level, LEVELS[level], attention)

    @property
    def n_classes(self) -> int:
        return len(self.vocabulary)


def attention_specs():
    return (conv(LATENT_CHANNELS, LATENT_CHANNELS, 1), act("Sigmoid"))


def classifier_specs(n_classes: int):
    return (LayerSpec("AdaptiveAvgPool1"), LayerSpec("Flatten"),
            linear(LATENT_CHANNELS, HIDDEN), act("ReLU"), linear(HIDDEN, n_classes))


def attention_apply(z, store: ParamStore, enabled: bool = True):
    """Gated latent ``z * sigmoid(conv1x1(z))``; identity when disabled."""
    if not enabled:
        return z
    if z.shape[-2] != LATENT_CHANNELS:
        raise ShapeError(f"attention expects {LATENT_CHANNELS} channels, got {z.shape[-2]}")
    batched = z if z.ndim == 3 else z[None]
    gate, _ = Sequential(attention_specs(), "attention").forward(store, batched)
    out = batched * gate
    return out if z.ndim == 3 else out[0]


class Head:
    def __init__(self, spec: HeadSpec, encoder_store: ParamStore, seed: int = 0,
                 own: dict[str, np.ndarray] | None = None):
        """Build from a trained encoder; ``own`` restores head tensors from a checkpoint."""
        self.spec = spec
        self.encoder = Sequential(ENCODER_SPECS, "encoder")
        self.attention = Sequential(attention_specs(), "attention") if spec.attention else None
        self.classifier = Sequential(classifier_specs(spec.n_classes), "classifier")

        store = ParamStore()
        for name in self.encoder.param_names():
            store.add(name, encoder_store[name], False)
        w = self.encoder.name(FINAL_CONV, "weight")
        b = self.encoder.name(FINAL_CONV, "bias")
        store.add(f"{PRIVATE}.weight", encoder_store[w].copy(), True)
        store.add(f"{PRIVATE}.bias", encoder_store[b].copy(), True)
        if self.attention:
            self.attention.init(seed, store)
        self.classifier.init(seed + 1, store)
        self.store = store
        if own is not None:
            missing = set(self.own_names()) - set(own)
            if missing:
                raise KeyError(f"head tensors missing: {sorted(missing)}")
            store.load({n: own[n] for n in self.own_names()})

    def own_names(self) -> list[str]:
        names = [f"{PRIVATE}.weight", f"{PRIVATE}.bias"]
        if self.attention:
            names += self.attention.param_names()
        return names + self.classifier.param_names()

    def own_tensors(self) -> dict[str, np.ndarray]:
        return {n: self.store[n] for n in self.own_names()}

    def frozen_names(self) -> list[str]:
        return [n for n in self.store.tensors if not self.store.trainable[n]]

    # -- forward / backward ------------------------------------------------

    def prefix(self, x) -> np.ndarray:
        """Frozen encoder layers before the private conv; ``x`` is (B, 1, L)."""
        h, _ = self.encoder.forward(self.store, x, train=False, stop=FINAL_CONV - 1)
        return h

    def forward_from_prefix(self, h):
        z, tail = self.encoder.forward(self.store, h, train=False, start=FINAL_CONV,
                                       overrides={FINAL_CONV: PRIVATE})
        gate = att_tape = None
        zp = z
        if self.attention:
            gate, att_tape = self.attention.forward(self.store, z)
            zp = z * gate
        logits, cls_tape = self.classifier.forward(self.store, zp)
        return logits, (tail, z, gate, att_tape, cls_tape)

    def backward(self, tapes, grad_logits):
        tail, z, gate, att_tape, cls_tape = tapes
        g = self.classifier.backward(self.store, cls_tape, grad_logits, need_input_grad=True)
        if self.attention:
            g_gate = g * z
            g = g * gate
            g += self.attention.backward(self.store, att_tape, g_gate, need_input_grad=True)
        self.encoder.backward(self.store, tail, g)

    def logits(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        if x.ndim == 1:
            x = x[None, None, :]
        elif x.ndim == 2:
            x = x[:, None, :]
        return self.forward_from_prefix(self.prefix(x))[0]

    @property
    def vocabulary(self) -> tuple[str, ...]:
        return self.spec.vocabulary

    def predict_proba(self, x) -> np.ndarray:
        return softmax(self.logits(x).astype(np.float64))

    def proba_from_prefix(self, h) -> np.ndarray:
        return softmax(self.forward_from_prefix(h)[0].astype(np.float64))

    def shares_prefix(self, other) -> bool:
        """True when ``other`` runs on the very same frozen encoder tensors."""
        names = self.encoder.param_names()
        return all(other.store.tensors.get(n) is self.store[n] for n in names
                   if not n.startswith(self.encoder.name(FINAL_CONV, "")))


def head_forward(samples, head: Head) -> np.ndarray:
    """Raw logits for one preprocessed waveform."""
    w = getattr(samples, "samples", samples)
    return head.logits(np.asarray(w, dtype=np.float32))[0]


class PrefixCache:
    """Frozen-prefix activations for a fixed sample array, memoized up to a byte budget."""

    def __init__(self, head: Head, x: np.ndarray, budget_bytes: int = 1 << 30,
                 batch_size: int = 16):
        self.head = head
        self.x = x
        self.cache: dict[int, np.ndarray] = {}
        self.budget = budget_bytes
        self.used = 0
        self.batch_size = batch_size

    def get(self, idx) -> np.ndarray:
        idx = np.asarray(idx)
        missing = [i for i in idx if int(i) not in self.cache]
        fresh = {}
        if missing:
            h = self.head.prefix(self.x[missing][:, None, :])
            for j, i in enumerate(missing):
                fresh[int(i)] = h[j]
                if self.used + h[j].nbytes <= self.budget:
                    self.cache[int(i)] = h[j].copy()
                    self.used += h[j].nbytes
        return np.stack([self.cache[int(i)] if int(i) in self.cache else fresh[int(i)]
                         for i in idx])


def fit_head(head: Head, train_x, train_y, val_x, val_y, cfg: TrainConfig,
             cache_bytes: int = 1 << 30, on_epoch=None) -> FitResult:
    """Cross-entropy training of the head's trainable set; frozen tensors untouched."""
    if len(train_x) == 0 or len(val_x) == 0:
        raise ConfigError(f"{head.spec.level} head needs non-empty train and val splits")
    cache = PrefixCache(head, np.concatenate([train_x, val_x]), cache_bytes)
    n = len(train_x)
    return fit_head_cached(head, cache, np.arange(n), train_y,
                           np.arange(n, n + len(val_x)), val_y, cfg, on_epoch)


def fit_head_cached(head: Head, cache: PrefixCache, train_idx, train_y, val_idx, val_y,
                    cfg: TrainConfig, on_epoch=None) -> FitResult:
    """Like :func:`fit_head` but reading samples by index from a shared prefix cache.

    Any head built on the same frozen encoder may reuse the cache.
    """
    train_idx, val_idx = np.asarray(train_idx), np.asarray(val_idx)
    if len(train_idx) == 0 or len(val_idx) == 0:
        raise ConfigError(f"{head.spec.level} head needs non-empty train and val splits")
    if not head.shares_prefix(cache.head):
        raise ValueError("prefix cache was built on a different encoder")
    train_y = np.asarray(train_y, dtype=np.int64)
    val_y = np.asarray(val_y, dtype=np.int64)

    def step(order):
        logits, tapes = head.forward_from_prefix(cache.get(train_idx[order]))
        loss, grad = cross_entropy(logits, train_y[order])
        head.backward(tapes, grad)
        return loss

    def evaluate():
        total, correct = 0.0, 0
        for idx in batches(len(val_idx), cfg.batch_size):
            logits, _ = head.forward_from_prefix(cache.get(val_idx[idx]))
            loss, _ = cross_entropy(logits, val_y[idx])
            total += loss * len(idx)
            correct += int((logits.argmax(1) == val_y[idx]).sum())
        return total / len(val_idx), {"val_accuracy": correct / len(val_idx)}

    return fit(head.store, len(train_idx), step, evaluate, cfg, on_epoch)


def cached_proba(head: Head, cache: PrefixCache, idx, batch_size: int = 16) -> np.ndarray:
    """Softmax outputs for cached samples ``idx``."""
    idx = np.asarray(idx)
    out = np.empty((len(idx), head.spec.n_classes))
    for b in batches(len(idx), batch_size):
        out[b] = head.proba_from_prefix(cache.get(idx[b]))
    return out


def labelled(entries, level: str, vocabulary) -> tuple[list, np.ndarray]:
    """Entries usable by a head and their class indices; rejects anything off-vocabulary."""
    ys = []
    for e in entries:
        label = label_of(e, level)
        if not e.is_fake or label not in vocabulary:
            raise ValueError(f"{e.path}: label {label!r} is outside the {level} vocabulary")
        ys.append(vocabulary.index(label))
    return list(entries), np.asarray(ys, dtype=np.int64)


def head_entries(entries, level: str, split: str):
    """Split entries a level trains on: all fakes for ADA, Codec fakes for ADMR."""
    chosen = select(entries, split=split, authenticity="fake")
    if level == "ADMR":
        chosen = [e for e in chosen if e.technology == "Codec"]
    return chosen


def train_head(level: str, entries, manifest_path, encoder_store: ParamStore,
               cfg: TrainConfig, attention: bool = True, cache_bytes: int = 1 << 30,
               arrays: dict | None = None, on_epoch=None) -> tuple[Head, FitResult]:
    """Train one head on its level's train/val entries.

    ``arrays`` may map entry path -> preprocessed samples to skip reloading.
    """
    spec = HeadSpec.for_level(level, attention)
    data = {}
    for split in ("train", "val"):
        chosen, y = labelled(head_entries(entries, spec.level, split), spec.level,
                             spec.vocabulary)
        if not chosen:
            raise ConfigError(f"{spec.level} {split} split is empty")
        if arrays is not None:
            x = np.stack([arrays[e.path] for e in chosen])
        else:
            x = load_entries(chosen, manifest_path)
        data[split] = (x, y)
    head = Head(spec, encoder_store, seed=cfg.seed)
    result = fit_head(head, *data["train"], *data["val"], cfg, cache_bytes, on_epoch)
    return head, result
