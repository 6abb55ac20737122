"""Forward and backward passes for the fixed layer set.

Every function works in the dtype of its inputs, so the same code runs in
float32 for training and float64 for gradient checking. Tensors are plain
``numpy.ndarray`` objects laid out as ``(batch, channels, time)`` for the
convolutional layers and ``(batch, features)`` for linear ones.

Convolutions are computed one batch item at a time through an im2col
buffer and a single GEMM; this keeps peak memory flat and makes results
independent of batch size.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import as_strided


class ShapeError(ValueError):
    """Raised when tensor shapes are inconsistent with a layer."""


class DegenerateBatchError(ValueError):
    """Raised when batch norm is asked for statistics of fewer than 2 values."""


BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def conv_out_length(length: int, kernel: int, stride: int, padding: int) -> int:
    return (length + 2 * padding - kernel) // stride + 1


def conv_transpose_out_length(length: int, kernel: int, stride: int, padding: int,
                              output_padding: int = 0) -> int:
    return (length - 1) * stride - 2 * padding + kernel + output_padding


def _windows(xp: np.ndarray, kernel: int, stride: int, n_out: int) -> np.ndarray:
    """View of shape (C, K, n_out) with ``view[c, k, t] = xp[c, t*stride + k]``."""
    s_c, s_t = xp.strides
    return as_strided(xp, shape=(xp.shape[0], kernel, n_out),
                      strides=(s_c, s_t, s_t * stride), writeable=False)


def _check_conv(x, w, b):
    if x.ndim != 3:
        raise ShapeError(f"expected (batch, channels, time) input, got shape {x.shape}")
    if w.ndim != 3:
        raise ShapeError(f"expected rank-3 weight, got shape {w.shape}")
    if b is not None and b.shape != (w.shape[0],):
        raise ShapeError(f"bias shape {b.shape} does not match weight {w.shape}")


# -- Conv1D -----------------------------------------------------------------

def conv1d_forward(x, w, b, stride=1, padding=0):
    """Cross-correlation of ``x[B, Cin, L]`` with ``w[Cout, Cin, K]``."""
    _check_conv(x, w, b)
    batch, c_in, length = x.shape
    c_out, w_in, kernel = w.shape
    if w_in != c_in:
        raise ShapeError(f"input has {c_in} channels but weight expects {w_in}")
    if stride < 1:
        raise ShapeError("stride must be >= 1")
    n_out = conv_out_length(length, kernel, stride, padding)
    if n_out < 1:
        raise ShapeError(f"input length {length} too short for kernel {kernel}")

    w2 = w.reshape(c_out, c_in * kernel)
    if kernel == 1 and stride == 1 and padding == 0:
        out = np.matmul(w2, x)
        if b is not None:
            out += b[None, :, None]
        return out
    out = np.empty((batch, c_out, n_out), dtype=x.dtype)
    xp = np.zeros((c_in, length + 2 * padding), dtype=x.dtype)
    cols = np.empty((c_in, kernel, n_out), dtype=x.dtype)
    for i in range(batch):
        xp[:, padding:padding + length] = x[i]
        np.copyto(cols, _windows(xp, kernel, stride, n_out))
        np.matmul(w2, cols.reshape(c_in * kernel, n_out), out=out[i])
    if b is not None:
        out += b[None, :, None]
    return out


def conv1d_backward(x, w, grad_out, stride=1, padding=0,
                    need_input_grad=True, need_param_grad=True):
    """Return ``(grad_x, grad_w, grad_b)``; skipped parts come back as None."""
    _check_conv(x, w, None)
    batch, c_in, length = x.shape
    c_out, _, kernel = w.shape
    n_out = conv_out_length(length, kernel, stride, padding)
    if grad_out.shape != (batch, c_out, n_out):
        raise ShapeError(f"grad_out shape {grad_out.shape} != {(batch, c_out, n_out)}")

    w2 = w.reshape(c_out, c_in * kernel)
    grad_x = np.empty_like(x) if need_input_grad else None
    grad_w2 = np.zeros_like(w2) if need_param_grad else None
    grad_b = grad_out.sum(axis=(0, 2)) if need_param_grad else None
    if kernel == 1 and stride == 1 and padding == 0:
        for i in range(batch):
            if need_param_grad:
                grad_w2 += grad_out[i] @ x[i].T
            if need_input_grad:
                np.matmul(w2.T, grad_out[i], out=grad_x[i])
        return grad_x, grad_w2.reshape(w.shape) if need_param_grad else None, grad_b
    xp = np.zeros((c_in, length + 2 * padding), dtype=x.dtype)
    cols = np.empty((c_in, kernel, n_out), dtype=x.dtype)
    gxp = np.empty((c_in, length + 2 * padding), dtype=x.dtype)
    span = stride * (n_out - 1) + 1
    for i in range(batch):
        g = grad_out[i]
        if need_param_grad:
            xp[:, padding:padding + length] = x[i]
            np.copyto(cols, _windows(xp, kernel, stride, n_out))
            grad_w2 += g @ cols.reshape(c_in * kernel, n_out).T
        if need_input_grad:
            gcols = (w2.T @ g).reshape(c_in, kernel, n_out)
            gxp.fill(0)
            for k in range(kernel):
                gxp[:, k:k + span:stride] += gcols[:, k]
            grad_x[i] = gxp[:, padding:padding + length]
    grad_w = grad_w2.reshape(w.shape) if need_param_grad else None
    return grad_x, grad_w, grad_b


# -- ConvTranspose1D --------------------------------------------------------

def conv_transpose1d_forward(x, w, b, stride=1, padding=0, output_padding=0):
    """Transposed convolution; ``w`` has shape ``(Cin, Cout, K)``."""
    _check_conv(x, w, None)
    batch, c_in, length = x.shape
    w_in, c_out, kernel = w.shape
    if w_in != c_in:
        raise ShapeError(f"input has {c_in} channels but weight expects {w_in}")
    if b is not None and b.shape != (c_out,):
        raise ShapeError(f"bias shape {b.shape} does not match {c_out} output channels")
    n_out = conv_transpose_out_length(length, kernel, stride, padding, output_padding)
    if n_out < 1:
        raise ShapeError("transposed convolution produces an empty output")

    full_len = (length - 1) * stride + kernel + output_padding
    span = stride * (length - 1) + 1
    wt = w.reshape(c_in, c_out * kernel).T
    out = np.empty((batch, c_out, n_out), dtype=x.dtype)
    full = np.empty((c_out, full_len), dtype=x.dtype)
    for i in range(batch):
        cols = (wt @ x[i]).reshape(c_out, kernel, length)
        full.fill(0)
        for k in range(kernel):
            full[:, k:k + span:stride] += cols[:, k]
        out[i] = full[:, padding:padding + n_out]
    if b is not None:
        out += b[None, :, None]
    return out


def conv_transpose1d_backward(x, w, grad_out, stride=1, padding=0, output_padding=0,
                              need_input_grad=True, need_param_grad=True):
    _check_conv(x, w, None)
    batch, c_in, length = x.shape
    _, c_out, kernel = w.shape
    n_out = conv_transpose_out_length(length, kernel, stride, padding, output_padding)
    if grad_out.shape != (batch, c_out, n_out):
        raise ShapeError(f"grad_out shape {grad_out.shape} != {(batch, c_out, n_out)}")

    full_len = (length - 1) * stride + kernel + output_padding
    w2 = w.reshape(c_in, c_out * kernel)
    grad_x = np.empty_like(x) if need_input_grad else None
    grad_w2 = np.zeros_like(w2) if need_param_grad else None
    grad_b = grad_out.sum(axis=(0, 2)) if need_param_grad else None
    gfull = np.zeros((c_out, full_len), dtype=x.dtype)
    cols = np.empty((c_out, kernel, length), dtype=x.dtype)
    for i in range(batch):
        gfull[:, padding:padding + n_out] = grad_out[i]
        np.copyto(cols, _windows(gfull, kernel, stride, length))
        c2 = cols.reshape(c_out * kernel, length)
        if need_input_grad:
            np.matmul(w2, c2, out=grad_x[i])
        if need_param_grad:
            grad_w2 += x[i] @ c2.T
    grad_w = grad_w2.reshape(w.shape) if need_param_grad else None
    return grad_x, grad_w, grad_b


# -- BatchNorm1D ------------------------------------------------------------

def batchnorm1d_forward(x, gain, shift, running_mean, running_var, train,
                        eps=BN_EPS, momentum=BN_MOMENTUM):
    """Per-channel normalization over (batch, time).

    In train mode the running statistics are updated in place (the variance
    update uses the unbiased estimate). Returns ``(y, cache)``.
    """
    if x.ndim != 3 or x.shape[1] != gain.shape[0]:
        raise ShapeError(f"batch norm over {gain.shape[0]} channels got input {x.shape}")
    if train:
        n = x.shape[0] * x.shape[2]
        if n < 2:
            raise DegenerateBatchError("batch norm in train mode needs batch*time >= 2")
        mean = x.mean(axis=(0, 2))
        centered = x - mean[None, :, None]
        var = np.square(centered).mean(axis=(0, 2))
        inv_std = 1.0 / np.sqrt(var + eps)
        running_mean *= 1 - momentum
        running_mean += momentum * mean.astype(running_mean.dtype)
        running_var *= 1 - momentum
        running_var += momentum * (var * (n / (n - 1))).astype(running_var.dtype)
    else:
        inv_std = (1.0 / np.sqrt(running_var + eps)).astype(x.dtype)
        centered = x - running_mean.astype(x.dtype)[None, :, None]
    xhat = centered
    xhat *= inv_std[None, :, None]
    y = xhat * gain[None, :, None]
    y += shift[None, :, None]
    return y, (xhat, inv_std, gain, train)


def batchnorm1d_backward(cache, grad_out, need_input_grad=True, need_param_grad=True):
    xhat, inv_std, gain, train = cache
    grad_gain = grad_shift = grad_x = None
    if need_param_grad or (need_input_grad and train):
        sum_g = grad_out.sum(axis=(0, 2))
        sum_gx = (grad_out * xhat).sum(axis=(0, 2))
        grad_gain, grad_shift = sum_gx, sum_g
    if need_input_grad:
        scale = (gain * inv_std)[None, :, None]
        if train:
            n = grad_out.shape[0] * grad_out.shape[2]
            grad_x = grad_out - (sum_g / n)[None, :, None]
            grad_x -= xhat * (sum_gx / n)[None, :, None]
            grad_x *= scale
        else:
            grad_x = grad_out * scale
    if not need_param_grad:
        grad_gain = grad_shift = None
    return grad_x, grad_gain, grad_shift


# -- activations ------------------------------------------------------------

def relu(x):
    return np.maximum(x, 0)


def relu_backward(y, grad_out):
    return grad_out * (y > 0)


def sigmoid(x):
    # tanh form: one pass, no overflow for large |x|
    y = np.tanh(x * 0.5)
    y += 1
    y *= 0.5
    return y


def sigmoid_backward(y, grad_out):
    return grad_out * y * (1 - y)


def tanh(x):
    return np.tanh(x)


def tanh_backward(y, grad_out):
    return grad_out * (1 - y * y)


ACTIVATIONS = {
    "ReLU": (relu, relu_backward),
    "Sigmoid": (sigmoid, sigmoid_backward),
    "Tanh": (tanh, tanh_backward),
}


def activation(x, kind):
    return ACTIVATIONS[kind][0](x)


def activation_backward(y, grad_out, kind):
    """Backward in terms of the forward *output* ``y``."""
    return ACTIVATIONS[kind][1](y, grad_out)


# -- pooling, flatten, linear ----------------------------------------------

def adaptive_avg_pool1(x):
    if x.shape[-1] < 1:
        raise ShapeError("cannot pool an empty time axis")
    return x.mean(axis=-1, keepdims=True)


def adaptive_avg_pool1_backward(input_shape, grad_out):
    t = input_shape[-1]
    return np.broadcast_to(grad_out / t, input_shape).copy()


def linear_forward(x, w, b):
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"linear layer {w.shape} cannot take input {x.shape}")
    return x @ w.T + b


def linear_backward(x, w, grad_out, need_input_grad=True, need_param_grad=True):
    grad_x = grad_out @ w if need_input_grad else None
    if need_param_grad:
        return grad_x, grad_out.T @ x, grad_out.sum(axis=0)
    return grad_x, None, None


# -- softmax and cross-entropy ---------------------------------------------

def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def cross_entropy(logits, targets):
    """Mean softmax cross-entropy and its gradient w.r.t. ``logits``."""
    logits = np.asarray(logits)
    targets = np.asarray(targets, dtype=np.int64)
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = -logp[np.arange(n), targets].mean()
    grad = np.exp(logp)
    grad[np.arange(n), targets] -= 1
    grad /= n
    return float(loss), grad.astype(logits.dtype)
