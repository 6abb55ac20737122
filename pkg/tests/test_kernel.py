import numpy as np
import pytest

from lava.kernel import (
    AdamState,
    ParamStore,
    Sequential,
    ShapeError,
    act,
    adam_step,
    batchnorm,
    batchnorm1d_forward,
    conv,
    conv1d_forward,
    conv_t,
    conv_transpose1d_forward,
    conv_out_length,
    conv_transpose_out_length,
    cross_entropy,
    grad_check,
    linear,
    LayerSpec,
    softmax,
)


def naive_conv(x, w, b, stride, padding):
    n, cin, length = x.shape
    cout, _, k = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding)))
    n_out = (length + 2 * padding - k) // stride + 1
    y = np.zeros((n, cout, n_out))
    for i in range(n):
        for o in range(cout):
            for t in range(n_out):
                y[i, o, t] = np.sum(xp[i, :, t * stride:t * stride + k] * w[o]) + b[o]
    return y


def naive_conv_t(x, w, b, stride, padding, output_padding):
    # scatter form: every input sample spreads a kernel-sized stamp
    n, cin, length = x.shape
    _, cout, k = w.shape
    full = (length - 1) * stride + k + output_padding
    y = np.zeros((n, cout, full))
    for i in range(n):
        for c in range(cin):
            for t in range(length):
                y[i, :, t * stride:t * stride + k] += x[i, c, t] * w[c]
    out_len = (length - 1) * stride - 2 * padding + k + output_padding
    return y[:, :, padding:padding + out_len] + b[None, :, None]


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 4), (3, 1)])
def test_conv_matches_loop(stride, padding):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 3, 23))
    w = rng.standard_normal((4, 3, 9 if padding == 4 else 3))
    b = rng.standard_normal(4)
    np.testing.assert_allclose(conv1d_forward(x, w, b, stride, padding),
                               naive_conv(x, w, b, stride, padding), atol=1e-12)


@pytest.mark.parametrize("stride,padding,op", [(1, 0, 0), (2, 4, 1), (3, 1, 2)])
def test_conv_transpose_matches_scatter(stride, padding, op):
    rng = np.random.default_rng(1)
    x = rng.standard_normal((2, 3, 11))
    w = rng.standard_normal((3, 2, 9))
    b = rng.standard_normal(2)
    np.testing.assert_allclose(conv_transpose1d_forward(x, w, b, stride, padding, op),
                               naive_conv_t(x, w, b, stride, padding, op), atol=1e-12)


def test_lengths():
    assert conv_out_length(48000, 9, 2, 4) == 24000
    assert conv_transpose_out_length(3000, 9, 2, 4, 1) == 6000


def test_conv_rejects_bad_channels():
    with pytest.raises(ShapeError):
        conv1d_forward(np.zeros((1, 2, 10)), np.zeros((4, 3, 3)), np.zeros(4))


def _layer_net(spec):
    return Sequential([spec], "t")


LAYER_CASES = {
    "Conv1D": (conv(3, 4, 9, 2, 4), (2, 3, 17)),
    "ConvTranspose1D": (conv_t(3, 4, 9, 2, 4, 1), (2, 3, 8)),
    "BatchNorm1D": (batchnorm(3), (4, 3, 7)),
    "ReLU": (act("ReLU"), (2, 3, 9)),
    "Sigmoid": (act("Sigmoid"), (2, 3, 9)),
    "Tanh": (act("Tanh"), (2, 3, 9)),
    "AdaptiveAvgPool1": (act("AdaptiveAvgPool1"), (2, 3, 9)),
    "Flatten": (act("Flatten"), (2, 3, 1)),
    "Linear": (linear(5, 3), (4, 5)),
}


@pytest.mark.parametrize("kind", sorted(LAYER_CASES))
@pytest.mark.parametrize("train", [True, False])
def test_layer_gradients(kind, train):
    spec, shape = LAYER_CASES[kind]
    net = _layer_net(spec)
    store = net.init(3, dtype=np.float64)
    x = np.random.default_rng(4).standard_normal(shape)
    rep = grad_check(net, store, x, train=train, seed=5, max_entries=None)
    assert rep.max_error < 1e-4, rep.errors


def test_zero_input_zero_weights_is_finite():
    net = Sequential([conv(1, 2, 3, 1, 1), batchnorm(2), act("ReLU")], "z")
    store = net.init(0, dtype=np.float64)
    for name in store.trainable_names():
        store.tensors[name][...] = 0.0
    rep = grad_check(net, store, np.zeros((2, 1, 8)), train=True)
    assert all(np.isfinite(v) for v in rep.errors.values())


def test_batchnorm_running_stats():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((8, 2, 5)) * 3 + 1
    rm, rv = np.zeros(2), np.ones(2)
    y, _ = batchnorm1d_forward(x, np.ones(2), np.zeros(2), rm, rv, True)
    flat = x.transpose(1, 0, 2).reshape(2, -1)
    np.testing.assert_allclose(rm, 0.1 * flat.mean(1))
    np.testing.assert_allclose(rv, 0.9 + 0.1 * flat.var(1, ddof=1))
    np.testing.assert_allclose(y.mean(axis=(0, 2)), 0, atol=1e-12)
    y_eval, _ = batchnorm1d_forward(x, np.ones(2), np.zeros(2), rm.copy(), rv.copy(), False)
    expect = (x - rm[None, :, None]) / np.sqrt(rv[None, :, None] + 1e-5)
    np.testing.assert_allclose(y_eval, expect)


def test_cross_entropy_gradient():
    rng = np.random.default_rng(2)
    logits = rng.standard_normal((5, 3))
    targets = np.array([0, 2, 1, 1, 0])
    loss, grad = cross_entropy(logits, targets)
    p = softmax(logits)
    assert loss == pytest.approx(-np.mean(np.log(p[np.arange(5), targets])))
    eps = 1e-6
    num = np.zeros_like(logits)
    for idx in np.ndindex(logits.shape):
        d = np.zeros_like(logits)
        d[idx] = eps
        num[idx] = (cross_entropy(logits + d, targets)[0]
                    - cross_entropy(logits - d, targets)[0]) / (2 * eps)
    np.testing.assert_allclose(grad, num, atol=1e-8)


def test_adam_matches_scalar_oracle():
    store = ParamStore()
    store.add("w", np.array([0.5, -1.0]), True)
    state = AdamState(lr=0.1, weight_decay=0.01)
    grads = [np.array([0.2, -0.3]), np.array([-0.1, 0.4])]
    p, m, v = np.array([0.5, -1.0]), np.zeros(2), np.zeros(2)
    for t, g in enumerate(grads, 1):
        store.zero_grad()
        store.accumulate("w", g)
        adam_step(store, state)
        gg = g + 0.01 * p
        m = 0.9 * m + 0.1 * gg
        v = 0.999 * v + 0.001 * gg * gg
        p = p - 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
    np.testing.assert_allclose(store["w"], p, rtol=1e-12)


def test_running_stats_cannot_train():
    store = ParamStore()
    with pytest.raises(ValueError):
        store.add("bn.running_mean", np.zeros(2), True)


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        LayerSpec("Conv1D", in_channels=1)
    with pytest.raises(ValueError):
        LayerSpec("Dropout")


def test_frozen_params_untouched_by_adam():
    net = Sequential([linear(3, 2)], "f")
    store = net.init(0)
    store.set_trainable("f.1.weight", False)
    before = store["f.1.weight"].copy()
    y, tape = net.forward(store, np.ones((2, 3), np.float32))
    store.zero_grad()
    net.backward(store, tape, np.ones_like(y))
    adam_step(store, AdamState(lr=0.1))
    assert np.array_equal(store["f.1.weight"], before)
