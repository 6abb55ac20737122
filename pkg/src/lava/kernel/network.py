"""Layer specifications, parameter storage and a sequential container."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from . import layers as L

_REQUIRED = {
    "Conv1D": ("in_channels", "out_channels", "kernel", "stride", "padding"),
    "ConvTranspose1D": ("in_channels", "out_channels", "kernel", "stride", "padding",
                        "output_padding"),
    "BatchNorm1D": ("features",),
    "ReLU": (),
    "Sigmoid": (),
    "Tanh": (),
    "AdaptiveAvgPool1": (),
    "Flatten": (),
    "Linear": ("in_features", "out_features"),
}
LAYER_KINDS = tuple(_REQUIRED)
_HYPER = ("in_channels", "out_channels", "kernel", "stride", "padding", "output_padding",
          "features", "in_features", "out_features")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    in_channels: int | None = None
    out_channels: int | None = None
    kernel: int | None = None
    stride: int | None = None
    padding: int | None = None
    output_padding: int | None = None
    features: int | None = None
    in_features: int | None = None
    out_features: int | None = None

    def __post_init__(self):
        if self.kind not in _REQUIRED:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        need = _REQUIRED[self.kind]
        for name in _HYPER:
            value = getattr(self, name)
            if name in need and value is None:
                raise ValueError(f"{self.kind} requires {name}")
            if name not in need and value is not None:
                raise ValueError(f"{self.kind} does not take {name}")
            if value is not None and (value < 0 or (value == 0 and name not in
                                                    ("padding", "output_padding"))):
                raise ValueError(f"{self.kind}.{name} must be positive, got {value}")

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if getattr(self, f.name) is not None}

    def param_shapes(self) -> dict[str, tuple[tuple[int, ...], bool]]:
        """Parameter name -> (shape, trainable)."""
        k = self.kind
        if k == "Conv1D":
            return {"weight": ((self.out_channels, self.in_channels, self.kernel), True),
                    "bias": ((self.out_channels,), True)}
        if k == "ConvTranspose1D":
            return {"weight": ((self.in_channels, self.out_channels, self.kernel), True),
                    "bias": ((self.out_channels,), True)}
        if k == "BatchNorm1D":
            c = (self.features,)
            return {"gain": (c, True), "shift": (c, True),
                    "running_mean": (c, False), "running_var": (c, False)}
        if k == "Linear":
            return {"weight": ((self.out_features, self.in_features), True),
                    "bias": ((self.out_features,), True)}
        return {}

    def fan_in(self) -> int:
        if self.kind in ("Conv1D", "ConvTranspose1D"):
            return self.in_channels * self.kernel
        if self.kind == "Linear":
            return self.in_features
        raise ValueError(f"{self.kind} has no weights")


def conv(cin, cout, kernel, stride=1, padding=0):
    return LayerSpec("Conv1D", in_channels=cin, out_channels=cout, kernel=kernel,
                     stride=stride, padding=padding)


def conv_t(cin, cout, kernel, stride=1, padding=0, output_padding=0):
    return LayerSpec("ConvTranspose1D", in_channels=cin, out_channels=cout, kernel=kernel,
                     stride=stride, padding=padding, output_padding=output_padding)


def batchnorm(features):
    return LayerSpec("BatchNorm1D", features=features)


def linear(fin, fout):
    return LayerSpec("Linear", in_features=fin, out_features=fout)


def act(kind):
    return LayerSpec(kind)


_STATS = ("running_mean", "running_var")


@dataclass
class ParamStore:
    """Named tensors with a trainable mask and gradient slots.

    Running batch-norm statistics can never be marked trainable.
    """

    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    trainable: dict[str, bool] = field(default_factory=dict)
    grads: dict[str, np.ndarray] = field(default_factory=dict)

    def add(self, name: str, value: np.ndarray, trainable: bool) -> None:
        if name in self.tensors:
            raise KeyError(f"duplicate tensor {name!r}")
        self.tensors[name] = value
        self.trainable[name] = False
        self.set_trainable(name, trainable)

    def set_trainable(self, name: str, flag: bool) -> None:
        if flag and name.rsplit(".", 1)[-1] in _STATS:
            raise ValueError(f"{name} is a running statistic and cannot be trained")
        self.trainable[name] = flag
        if flag:
            self.grads[name] = np.zeros_like(self.tensors[name])
        else:
            self.grads.pop(name, None)

    def freeze_all(self) -> None:
        for name in self.tensors:
            self.set_trainable(name, False)

    def trainable_names(self) -> list[str]:
        return [n for n in self.tensors if self.trainable[n]]

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0)

    def accumulate(self, name: str, grad: np.ndarray) -> None:
        if self.trainable.get(name):
            self.grads[name] += grad

    def __getitem__(self, name):
        return self.tensors[name]

    def __contains__(self, name):
        return name in self.tensors

    def astype(self, dtype) -> ParamStore:
        out = ParamStore()
        for name, value in self.tensors.items():
            out.add(name, value.astype(dtype), self.trainable[name])
        return out

    def copy(self) -> ParamStore:
        out = ParamStore()
        for name, value in self.tensors.items():
            out.add(name, value.copy(), self.trainable[name])
        return out

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: v.copy() for n, v in self.tensors.items()}

    def load(self, values: dict[str, np.ndarray]) -> None:
        for name, value in values.items():
            np.copyto(self.tensors[name], value)

    def count(self, trainable_only=False) -> int:
        return sum(v.size for n, v in self.tensors.items()
                   if self.trainable[n] or not trainable_only)


def init_params(specs, seed: int, prefix: str = "", store: ParamStore | None = None,
                dtype=np.float32) -> ParamStore:
    """Kaiming-uniform weights (bound sqrt(6/fan_in)), zero biases, identity batch norm.

    Layers are named ``{prefix}.{i}`` with ``i`` counting from 1.
    """
    store = store if store is not None else ParamStore()
    rng = np.random.default_rng(seed)
    for i, spec in enumerate(specs, start=1):
        for pname, (shape, trainable) in spec.param_shapes().items():
            if pname == "weight":
                bound = np.sqrt(6.0 / spec.fan_in())
                value = rng.uniform(-bound, bound, size=shape)
            elif pname in ("gain", "running_var"):
                value = np.ones(shape)
            else:
                value = np.zeros(shape)
            store.add(_name(prefix, i, pname), value.astype(dtype), trainable)
    return store


def _name(prefix, index, pname):
    return f"{prefix}.{index}.{pname}" if prefix else f"{index}.{pname}"


class Sequential:
    """A chain of layers whose parameters live in an external ParamStore.

    ``forward`` returns the output and a tape; ``backward`` consumes the tape,
    accumulates gradients for trainable tensors and stops as soon as nothing
    upstream needs a gradient.
    """

    def __init__(self, specs, prefix: str):
        self.specs = list(specs)
        self.prefix = prefix

    def __len__(self):
        return len(self.specs)

    def name(self, index: int, pname: str) -> str:
        return _name(self.prefix, index, pname)

    def param_names(self) -> list[str]:
        return [self.name(i, p) for i, s in enumerate(self.specs, start=1)
                for p in s.param_shapes()]

    def init(self, seed: int, store: ParamStore | None = None, dtype=np.float32):
        return init_params(self.specs, seed, self.prefix, store, dtype)

    def output_length(self, length: int) -> int:
        for s in self.specs:
            if s.kind == "Conv1D":
                length = L.conv_out_length(length, s.kernel, s.stride, s.padding)
            elif s.kind == "ConvTranspose1D":
                length = L.conv_transpose_out_length(length, s.kernel, s.stride, s.padding,
                                                     s.output_padding)
        return length

    def forward(self, store: ParamStore, x, train=False, start=1, stop=None,
                overrides: dict[int, str] | None = None):
        """Run layers ``start..stop`` (1-based, inclusive).

        ``overrides`` maps a layer index to an alternative name prefix, which
        lets a head substitute its private copy of one layer.
        """
        stop = len(self.specs) if stop is None else stop
        tape = []
        for i in range(start, stop + 1):
            spec = self.specs[i - 1]
            pfx = (overrides or {}).get(i)
            get = (lambda p, i=i, pfx=pfx: store[f"{pfx}.{p}" if pfx else self.name(i, p)])
            y, cache = _layer_forward(spec, get, x, train)
            tape.append((i, spec, pfx, x, y, cache))
            x = y
        return x, tape

    def backward(self, store: ParamStore, tape, grad, need_input_grad=False):
        names_of = lambda i, pfx, p: f"{pfx}.{p}" if pfx else self.name(i, p)
        # a layer needs to pass gradient down only if something below is trainable
        below = []
        seen = need_input_grad
        for i, spec, pfx, *_ in tape:
            below.append(seen)
            seen = seen or any(store.trainable.get(names_of(i, pfx, p))
                               for p in spec.param_shapes())
        for (i, spec, pfx, x, y, cache), need_down in zip(reversed(tape), reversed(below)):
            names = {p: names_of(i, pfx, p) for p in spec.param_shapes()}
            need_param = any(store.trainable.get(n) for n in names.values())
            if not need_down and not need_param:
                return None
            get = lambda p: store[names[p]]
            grad, pgrads = _layer_backward(spec, get, x, y, cache, grad,
                                           need_down, need_param)
            for p, g in pgrads.items():
                store.accumulate(names[p], g)
            if not need_down:
                return None
        return grad


def _layer_forward(spec, get, x, train):
    k = spec.kind
    if k == "Conv1D":
        return L.conv1d_forward(x, get("weight"), get("bias"), spec.stride, spec.padding), None
    if k == "ConvTranspose1D":
        return L.conv_transpose1d_forward(x, get("weight"), get("bias"), spec.stride,
                                          spec.padding, spec.output_padding), None
    if k == "BatchNorm1D":
        return L.batchnorm1d_forward(x, get("gain"), get("shift"), get("running_mean"),
                                     get("running_var"), train)
    if k in L.ACTIVATIONS:
        return L.activation(x, k), None
    if k == "AdaptiveAvgPool1":
        return L.adaptive_avg_pool1(x), None
    if k == "Flatten":
        return x.reshape(x.shape[0], -1), None
    if k == "Linear":
        return L.linear_forward(x, get("weight"), get("bias")), None
    raise AssertionError(k)


def _layer_backward(spec, get, x, y, cache, grad, need_down, need_param):
    k = spec.kind
    if k == "Conv1D":
        gx, gw, gb = L.conv1d_backward(x, get("weight"), grad, spec.stride, spec.padding,
                                       need_down, need_param)
        return gx, ({"weight": gw, "bias": gb} if need_param else {})
    if k == "ConvTranspose1D":
        gx, gw, gb = L.conv_transpose1d_backward(x, get("weight"), grad, spec.stride,
                                                 spec.padding, spec.output_padding,
                                                 need_down, need_param)
        return gx, ({"weight": gw, "bias": gb} if need_param else {})
    if k == "BatchNorm1D":
        gx, gg, gs = L.batchnorm1d_backward(cache, grad, need_down, need_param)
        return gx, ({"gain": gg, "shift": gs} if need_param else {})
    if k in L.ACTIVATIONS:
        return L.activation_backward(y, grad, k), {}
    if k == "AdaptiveAvgPool1":
        return L.adaptive_avg_pool1_backward(x.shape, grad), {}
    if k == "Flatten":
        return grad.reshape(x.shape), {}
    if k == "Linear":
        gx, gw, gb = L.linear_backward(x, get("weight"), grad, need_down, need_param)
        return gx, ({"weight": gw, "bias": gb} if need_param else {})
    raise AssertionError(k)
