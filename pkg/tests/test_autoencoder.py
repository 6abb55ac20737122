import math

import numpy as np
import pytest

from lava.autoencoder import (
    DECODER_SPECS,
    ENCODER_SPECS,
    Autoencoder,
    LossConfig,
    encode,
    fit_autoencoder,
    reconstruct,
    smoothed_l1,
    train_autoencoder,
)
from lava.corpus import ManifestEntry
from lava.kernel import ParamStore, Sequential, ShapeError
from lava.training import ConfigError, EarlyStopping, TrainConfig, fit


def scalar_loss(x, xh, beta):
    d = x - xh
    if abs(d) < beta:
        return 0.5 * d * d / beta
    return abs(d) - 0.5 * beta


def test_smoothed_l1_small_cases():
    loss, grad = smoothed_l1(np.array([0.0, 1.0]), np.array([0.5e-4, 0.0]), beta=1e-4)
    expect = (0.5 * (0.5e-4) ** 2 / 1e-4 + (1 - 0.5e-4)) / 2
    assert loss == pytest.approx(expect, rel=1e-12)
    np.testing.assert_allclose(grad, [0.5 / 2, -1 / 2])


def test_smoothed_l1_breakpoint_takes_linear_branch():
    loss, _ = smoothed_l1(np.array([0.0]), np.array([0.25]), beta=0.25)
    assert loss == 0.25 - 0.125


def test_smoothed_l1_gradient_numeric():
    rng = np.random.default_rng(3)
    x = rng.standard_normal(50)
    xh = x + rng.uniform(-3e-4, 3e-4, 50)
    _, g = smoothed_l1(x, xh, 1e-4)
    eps = 1e-9
    for i in range(0, 50, 7):
        d = np.zeros(50)
        d[i] = eps
        num = (smoothed_l1(x, xh + d, 1e-4)[0] - smoothed_l1(x, xh - d, 1e-4)[0]) / (2 * eps)
        assert g[i] == pytest.approx(num, rel=1e-4, abs=1e-12)


def test_loss_config_rejects_bad_beta():
    with pytest.raises(ValueError):
        LossConfig(0.0)


def test_stack_shapes():
    enc = Sequential(ENCODER_SPECS, "encoder")
    dec = Sequential(DECODER_SPECS, "decoder")
    assert enc.output_length(48000) == 3000
    assert dec.output_length(3000) == 48000
    kinds = [s.kind for s in ENCODER_SPECS]
    assert kinds == ["Conv1D", "BatchNorm1D", "ReLU"] * 4
    assert [s.out_channels for s in ENCODER_SPECS if s.kind == "Conv1D"] == [32, 64, 128, 256]


def test_latent_shape_and_length_contract():
    model = Autoencoder(seed=0)
    x = np.random.default_rng(0).uniform(-1, 1, 48000).astype(np.float32)
    z = encode(x, model.store)
    assert z.shape == (256, 3000) and z.dtype == np.float32
    assert reconstruct(x, model.store).shape == (48000,)
    with pytest.raises(ShapeError):
        encode(np.zeros(47999, np.float32), model.store)


def test_encoder_only_store_cannot_reconstruct():
    model = Autoencoder(seed=0)
    with pytest.raises(KeyError):
        reconstruct(np.zeros(48000, np.float32), model.encoder_store())


def test_early_stopping_trace():
    losses = iter([0.5, 0.4, 0.45, 0.44, 0.46, 0.47, 0.3, 0.2])
    store = ParamStore()
    store.add("w", np.zeros(1), True)
    epochs = []

    def step(idx):
        store.accumulate("w", np.ones(1))
        return 1.0

    def evaluate():
        store.tensors["w"][...] = len(epochs) + 1   # mark the epoch in the params
        return next(losses), {}

    res = fit(store, 4, step, evaluate, TrainConfig(max_epochs=20, patience=3),
              on_epoch=lambda r: epochs.append(r.epoch))
    assert epochs == [1, 2, 3, 4, 5, 6]
    assert res.best_epoch == 2
    assert store["w"][0] == 2
    assert [r.best_so_far for r in res.history] == [0.5, 0.4, 0.4, 0.4, 0.4, 0.4]


def test_early_stopping_counter():
    s = EarlyStopping(1)
    assert s.update(1, 1.0) and not s.should_stop
    assert not s.update(2, 1.0) and not s.should_stop   # ties are not improvements
    s.update(3, 2.0)
    assert s.should_stop


def test_train_config_validation():
    with pytest.raises(ConfigError):
        TrainConfig(max_epochs=0)
    with pytest.raises(ConfigError):
        TrainConfig(lr=-1)


def _tiny_data(n, length=512, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(length) / 16000
    f = rng.uniform(100, 2000, (n, 1))
    return (0.8 * np.sin(2 * np.pi * f * t)).astype(np.float32)


def test_fit_is_deterministic_and_restores_best():
    x = _tiny_data(8)
    cfg = TrainConfig(max_epochs=3, batch_size=4, lr=1e-3, seed=5)
    m1, r1 = fit_autoencoder(x, x[:4], cfg)
    m2, r2 = fit_autoencoder(x, x[:4], cfg)
    assert [h.to_dict() for h in r1.history] == [h.to_dict() for h in r2.history]
    for name in m1.store.tensors:
        assert np.array_equal(m1.store[name], m2.store[name])
    best = min(h.val_loss for h in r1.history)
    assert m1.loss(x[:4], 1e-4) == pytest.approx(best, rel=1e-5)


def test_training_reduces_loss():
    x = _tiny_data(8, seed=1)
    _, res = fit_autoencoder(x, x, TrainConfig(max_epochs=6, batch_size=4, lr=1e-3,
                                               patience=10))
    assert res.history[-1].train_loss < res.history[0].train_loss


def test_train_autoencoder_rejects_real(tmp_path):
    entries = [ManifestEntry("a.wav", None, None, "real", "train")]
    with pytest.raises(ValueError, match="real"):
        train_autoencoder(entries, tmp_path / "m.jsonl", TrainConfig())


def test_train_autoencoder_empty_split(tmp_path):
    with pytest.raises(ConfigError):
        train_autoencoder([], tmp_path / "m.jsonl", TrainConfig())


def test_history_record_fields():
    x = _tiny_data(4)
    _, res = fit_autoencoder(x, x, TrainConfig(max_epochs=1, batch_size=4))
    rec = res.history[0].to_dict()
    assert set(rec) == {"epoch", "train_loss", "val_loss", "best_so_far"}
    assert math.isfinite(rec["train_loss"])
