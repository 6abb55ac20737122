"""Adam with coupled L2 weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import ParamStore


@dataclass
class AdamState:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(store: ParamStore, state: AdamState) -> None:
    """One in-place update of every trainable tensor in ``store``.

    The decay term ``weight_decay * p`` is added to the gradient before the
    moment updates (classical L2, not the decoupled AdamW form).
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1 - b1 ** state.t
    c2 = 1 - b2 ** state.t
    for name in store.trainable_names():
        p = store.tensors[name]
        g = store.grads[name]
        if state.weight_decay:
            g = g + state.weight_decay * p
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * np.square(g)
        step = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p -= (state.lr * step).astype(p.dtype)
