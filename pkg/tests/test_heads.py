import numpy as np
import pytest

from lava.autoencoder import Autoencoder
from lava.checkpoint import head_meta, load_head, save_head
from lava.corpus import ManifestEntry
from lava.heads import (
    Head,
    HeadSpec,
    PrefixCache,
    attention_apply,
    cached_proba,
    fit_head,
    head_entries,
    head_forward,
    labelled,
)
from lava.training import ConfigError, TrainConfig

L = 2048    # heads are fully convolutional up to the pooling layer


@pytest.fixture(scope="module")
def encoder():
    return Autoencoder(seed=0).encoder_store()


def _data(n, n_classes, seed=0):
    # class k: tone at a class-specific frequency
    rng = np.random.default_rng(seed)
    y = np.arange(n) % n_classes
    t = np.arange(L) / 16000
    f = 300 + 900 * y[:, None] + rng.uniform(-30, 30, (n, 1))
    return np.sin(2 * np.pi * f * t).astype(np.float32), y


def test_parameter_sets(encoder):
    with_att = Head(HeadSpec.for_level("ADA"), encoder)
    without = Head(HeadSpec.for_level("ADA", attention=False), encoder)
    assert with_att.store.count(trainable_only=True) > without.store.count(trainable_only=True)
    assert any(n.startswith("attention.") for n in with_att.own_names())
    assert not any(n.startswith("attention.") for n in without.own_names())
    assert "final_conv.weight" in with_att.own_names()
    assert all(not with_att.store.trainable[n] for n in with_att.frozen_names())
    assert all(n.startswith("encoder.") for n in with_att.frozen_names())


def test_private_conv_starts_as_copy(encoder):
    head = Head(HeadSpec.for_level("ADMR"), encoder)
    np.testing.assert_array_equal(head.store["final_conv.weight"], encoder["encoder.10.weight"])
    assert head.store["final_conv.weight"] is not encoder["encoder.10.weight"]


def test_training_leaves_frozen_tensors_untouched(encoder):
    head = Head(HeadSpec.for_level("ADA"), encoder, seed=1)
    before = {n: head.store[n].copy() for n in head.frozen_names()}
    own_before = {n: v.copy() for n, v in head.own_tensors().items()}
    x, y = _data(12, 3)
    fit_head(head, x, y, x[:6], y[:6], TrainConfig(max_epochs=2, batch_size=4, lr=1e-3))
    for n, v in before.items():
        assert np.array_equal(head.store[n], v), n
    assert not np.array_equal(head.store["final_conv.weight"], own_before["final_conv.weight"])


def test_head_learns_separable_tones(encoder):
    head = Head(HeadSpec.for_level("ADA"), encoder, seed=2)
    x, y = _data(24, 3)
    res = fit_head(head, x, y, x, y, TrainConfig(max_epochs=15, batch_size=8, lr=3e-3,
                                                 patience=15))
    assert res.history[-1].extras["val_accuracy"] >= 0.9


def test_gate_bounded(encoder):
    head = Head(HeadSpec.for_level("ADA"), encoder)
    x, _ = _data(2, 3)
    h = head.prefix(x[:, None, :])
    z, _ = head.encoder.forward(head.store, h, start=10, overrides={10: "final_conv"})
    zp = attention_apply(z, head.store)
    assert np.all(np.abs(zp) <= np.abs(z))
    assert np.all((np.abs(zp) < np.abs(z)) | (z == 0))


def test_ablation_equals_unit_gate(encoder):
    on = Head(HeadSpec.for_level("ADMR"), encoder, seed=3)
    off = Head(HeadSpec.for_level("ADMR", attention=False), encoder, seed=3)
    shared = {n: on.store[n] for n in off.own_names()}
    off.store.load(shared)
    x, _ = _data(3, 6)
    # forcing the gate to 1: huge bias saturates the sigmoid exactly in float32
    on.store.tensors["attention.1.weight"][...] = 0
    on.store.tensors["attention.1.bias"][...] = 50
    np.testing.assert_array_equal(on.logits(x), off.logits(x))


def test_predict_proba_rows_sum_to_one(encoder):
    head = Head(HeadSpec.for_level("ADMR"), encoder)
    x, _ = _data(4, 6)
    p = head.predict_proba(x)
    assert p.shape == (4, 6)
    np.testing.assert_allclose(p.sum(1), 1, atol=1e-12)
    assert np.array_equal(head_forward(x[0], head), head.logits(x[:1])[0])


def test_prefix_cache_matches_direct(encoder):
    head = Head(HeadSpec.for_level("ADA"), encoder)
    x, _ = _data(5, 3)
    cache = PrefixCache(head, x, budget_bytes=2 * head.prefix(x[:1, None]).nbytes)
    direct = head.predict_proba(x)
    # batch composition changes BLAS blocking, so agreement is to round-off
    np.testing.assert_allclose(cached_proba(head, cache, np.arange(5), batch_size=2), direct,
                               rtol=1e-6)
    assert len(cache.cache) == 2


def test_off_vocabulary_labels():
    real = ManifestEntry("r.wav", None, None, "real", "train")
    with pytest.raises(ValueError):
        labelled([real], "ADA", ("ASV", "FoR", "Codec"))
    asv = ManifestEntry("a.wav", "ASV", None, "fake", "train")
    with pytest.raises(ValueError):
        labelled([asv], "ADMR", ("F01", "F02", "F03", "F04", "F05", "F06"))


def test_admr_uses_codec_fakes_only():
    entries = [ManifestEntry("a.wav", "ASV", None, "fake", "train"),
               ManifestEntry("c.wav", "Codec", "F02", "fake", "train"),
               ManifestEntry("r.wav", None, None, "real", "train")]
    assert [e.path for e in head_entries(entries, "ADMR", "train")] == ["c.wav"]
    assert [e.path for e in head_entries(entries, "ADA", "train")] == ["a.wav", "c.wav"]


def test_empty_split(encoder):
    head = Head(HeadSpec.for_level("ADA"), encoder)
    with pytest.raises(ConfigError):
        fit_head(head, np.zeros((0, L), np.float32), [], np.zeros((1, L), np.float32), [0],
                 TrainConfig())


def test_head_checkpoint_roundtrip(encoder, tmp_path):
    head = Head(HeadSpec.for_level("ADMR", attention=False), encoder, seed=4)
    save_head(head, tmp_path / "h.lava", head_meta(head, 4, 1e-4))
    back, th, meta = load_head(tmp_path / "h.lava", encoder)
    assert th is None and meta["attention"] is False and back.spec == head.spec
    x, _ = _data(2, 6)
    np.testing.assert_array_equal(back.logits(x), head.logits(x))
