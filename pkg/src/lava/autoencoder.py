"""Fake-only convolutional autoencoder whose encoder becomes the shared backbone."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import CLIP_SAMPLES, load_entries, select
from .kernel import ParamStore, Sequential, ShapeError, act, batchnorm, conv, conv_t
from .training import ConfigError, FitResult, TrainConfig, batches, fit

CHANNELS = (1, 32, 64, 128, 256)
KERNEL, STRIDE, PADDING, OUTPUT_PADDING = 9, 2, 4, 1
LATENT_CHANNELS = CHANNELS[-1]
FINAL_CONV = 10          # index of the last encoder conv (1-based)


def encoder_specs():
    specs = []
    for cin, cout in zip(CHANNELS[:-1], CHANNELS[1:]):
        specs += [conv(cin, cout, KERNEL, STRIDE, PADDING), batchnorm(cout), act("ReLU")]
    return specs


def decoder_specs():
    rev = CHANNELS[::-1]
    specs = []
    for i, (cin, cout) in enumerate(zip(rev[:-1], rev[1:])):
        specs.append(conv_t(cin, cout, KERNEL, STRIDE, PADDING, OUTPUT_PADDING))
        if i < len(rev) - 2:
            specs += [batchnorm(cout), act("ReLU")]
    specs.append(act("Tanh"))
    return specs


ENCODER_SPECS = tuple(encoder_specs())
DECODER_SPECS = tuple(decoder_specs())


@dataclass(frozen=True)
class LossConfig:
    beta: float = 1e-4

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")


def smoothed_l1(x, x_hat, beta=1e-4):
    """Mean smoothed-L1 reconstruction loss and its gradient w.r.t. ``x_hat``.

    Per element: ``0.5 d^2 / beta`` if ``|d| < beta`` else ``|d| - 0.5 beta``,
    with ``d = x - x_hat``. At ``|d| == beta`` the linear branch applies.
    """
    x = np.asarray(x)
    x_hat = np.asarray(x_hat)
    if x.shape != x_hat.shape:
        raise ShapeError(f"shape mismatch {x.shape} vs {x_hat.shape}")
    d = x_hat.astype(np.float64) - x
    a = np.abs(d)
    quad = a < beta
    per = np.where(quad, 0.5 * d * d / beta, a - 0.5 * beta)
    grad = np.where(quad, d / beta, np.sign(d)) / d.size
    return float(per.mean()), grad.astype(x_hat.dtype)


class Autoencoder:
    """Encoder and decoder sharing one ParamStore (names ``encoder.*`` / ``decoder.*``)."""

    def __init__(self, store: ParamStore | None = None, seed: int = 0):
        self.encoder = Sequential(ENCODER_SPECS, "encoder")
        self.decoder = Sequential(DECODER_SPECS, "decoder")
        if store is None:
            store = self.encoder.init(seed)
            self.decoder.init(seed + 1, store)
        self.store = store

    def has_decoder(self) -> bool:
        return all(n in self.store for n in self.decoder.param_names())

    def forward(self, x, train=False):
        z, enc_tape = self.encoder.forward(self.store, x, train)
        y, dec_tape = self.decoder.forward(self.store, z, train)
        return y, (enc_tape, dec_tape)

    def train_step(self, x, beta):
        y, (enc_tape, dec_tape) = self.forward(x, train=True)
        loss, grad = smoothed_l1(x, y, beta)
        g = self.decoder.backward(self.store, dec_tape, grad, need_input_grad=True)
        self.encoder.backward(self.store, enc_tape, g)
        return loss

    def loss(self, x_all, beta, batch_size=16) -> float:
        total = 0.0
        for idx in batches(len(x_all), batch_size):
            x = x_all[idx][:, None, :]
            y, _ = self.forward(x)
            total += smoothed_l1(x, y, beta)[0] * len(idx)
        return total / len(x_all)

    def encoder_store(self) -> ParamStore:
        out = ParamStore()
        for name in self.encoder.param_names():
            out.add(name, self.store[name], False)
        return out


def _as_batch(samples) -> np.ndarray:
    x = np.asarray(samples, dtype=np.float32)
    if x.shape[-1] != CLIP_SAMPLES:
        raise ShapeError(f"expected {CLIP_SAMPLES} preprocessed samples, got {x.shape[-1]}")
    return x.reshape(-1, 1, CLIP_SAMPLES)


def encode(samples, store: ParamStore) -> np.ndarray:
    """Latent of shape (256, 3000) for one preprocessed waveform (batch norm in eval mode)."""
    w = getattr(samples, "samples", samples)
    z, _ = Sequential(ENCODER_SPECS, "encoder").forward(store, _as_batch(w))
    return z[0]


def reconstruct(samples, store: ParamStore) -> np.ndarray:
    model = Autoencoder(store)
    if not model.has_decoder():
        raise KeyError("store has no decoder parameters")
    w = getattr(samples, "samples", samples)
    y, _ = model.forward(_as_batch(w))
    return y[0, 0]


def fit_autoencoder(train_x, val_x, cfg: TrainConfig, loss_cfg: LossConfig = LossConfig(),
                    model: Autoencoder | None = None, on_epoch=None):
    """Train on arrays of shape (N, L); returns ``(model, FitResult)``."""
    if len(train_x) == 0 or len(val_x) == 0:
        raise ConfigError("autoencoder needs non-empty train and val splits")
    model = model or Autoencoder(seed=cfg.seed)
    train_x = np.asarray(train_x, dtype=np.float32)
    val_x = np.asarray(val_x, dtype=np.float32)

    def step(idx):
        return model.train_step(train_x[idx][:, None, :], loss_cfg.beta)

    def evaluate():
        return model.loss(val_x, loss_cfg.beta, cfg.batch_size), {}

    result = fit(model.store, len(train_x), step, evaluate, cfg, on_epoch)
    return model, result


def train_autoencoder(entries, manifest_path, cfg: TrainConfig,
                      loss_cfg: LossConfig = LossConfig(), limit: dict | None = None,
                      on_epoch=None) -> tuple[Autoencoder, FitResult]:
    """Train on the fake-only ``train``/``val`` entries of a manifest.

    ``limit`` optionally caps the number of entries used per split, taking
    an evenly strided subset so every source stays represented.
    """
    real = [e for e in entries if not e.is_fake]
    if real:
        raise ValueError(f"autoencoder manifest contains real audio: {real[0].path}")
    splits = {}
    for split in ("train", "val"):
        chosen = select(entries, split=split)
        cap = (limit or {}).get(split)
        if cap is not None and len(chosen) > cap:
            pick = np.linspace(0, len(chosen) - 1, cap).round().astype(int)
            chosen = [chosen[i] for i in pick]
        if not chosen:
            raise ConfigError(f"autoencoder {split} split is empty")
        splits[split] = load_entries(chosen, manifest_path)
    return fit_autoencoder(splits["train"], splits["val"], cfg, loss_cfg, on_epoch=on_epoch)
