"""Central finite-difference gradient checking in float64."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .network import ParamStore, Sequential

STEP = 1e-5


@dataclass
class GradCheckReport:
    """Max relative error per checked tensor.

    ``skipped`` counts coordinates left out because the +/- step crossed a
    ReLU kink, where the two-sided difference is not a derivative.
    """

    errors: dict[str, float] = field(default_factory=dict)
    checked: dict[str, int] = field(default_factory=dict)
    skipped: dict[str, int] = field(default_factory=dict)

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    def passed(self, tol: float) -> bool:
        return self.max_error < tol


def relative_error(analytic, numeric, floor=1e-8) -> np.ndarray:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_grad(f, x: np.ndarray, indices, step=STEP, signature=None):
    """Central differences of scalar ``f()`` w.r.t. ``x`` at flat ``indices``.

    ``x`` is perturbed in place and restored. With a ``signature`` callable
    (evaluated right after each ``f()``), also returns a mask of coordinates
    whose two probes produced different signatures.
    """
    flat = x.reshape(-1)
    out = np.empty(len(indices))
    crossed = np.zeros(len(indices), dtype=bool)
    for j, idx in enumerate(indices):
        old = flat[idx]
        flat[idx] = old + step
        fp = f()
        sp = signature() if signature else None
        flat[idx] = old - step
        fm = f()
        if signature:
            crossed[j] = signature() != sp
        flat[idx] = old
        out[j] = (fp - fm) / (2 * step)
    return (out, crossed) if signature else out


def _pick(size, limit, rng):
    if limit is None or size <= limit:
        return np.arange(size)
    return np.sort(rng.choice(size, size=limit, replace=False))


def _relu_signature(tape) -> bytes:
    masks = [np.packbits(y > 0).tobytes() for (_, spec, _, _, y, _) in tape
             if spec.kind == "ReLU"]
    return b"".join(masks)


def grad_check(net: Sequential, store: ParamStore, x, train=False, seed=0,
               max_entries: int | None = 24, step=STEP) -> GradCheckReport:
    """Compare analytic and numeric gradients of a random projection of the output.

    Works on float64 copies of ``store`` and ``x``; the scalar objective is
    ``sum(net(x) * R)`` with a fixed random ``R``. Batch-norm running stats are
    restored after every forward so train-mode checks are repeatable.
    ``max_entries`` caps how many coordinates per tensor are probed.

    Errors are ``|a - n| / max(|a|, |n|, floor)`` where ``floor`` is 1e-5 of
    the largest analytic gradient in the model; gradients that are
    identically zero (a conv bias feeding train-mode batch norm) are then
    compared on the model's own scale instead of against round-off.
    """
    rng = np.random.default_rng(seed)
    s64 = store.astype(np.float64)
    x64 = np.array(x, dtype=np.float64)
    stats = {n: v.copy() for n, v in s64.tensors.items() if not s64.trainable[n]}
    last = {}

    def run():
        y, tape = net.forward(s64, x64, train=train)
        s64.load(stats)
        last["tape"] = tape
        return y, tape

    y, _ = run()
    proj = rng.standard_normal(y.shape)

    def objective():
        return float(np.sum(run()[0] * proj))

    def signature():
        return _relu_signature(last["tape"])

    s64.zero_grad()
    _, tape = run()
    gx = net.backward(s64, tape, proj, need_input_grad=True)

    targets = [("input", x64, gx)] + [(n, s64.tensors[n], s64.grads[n])
                                      for n in s64.trainable_names()]
    scale = max(float(np.abs(g).max()) for _, _, g in targets if g.size)
    floor = max(1e-5 * scale, 1e-12)

    report = GradCheckReport()
    for name, tensor, analytic in targets:
        idx = _pick(tensor.size, max_entries, rng)
        num, crossed = numeric_grad(objective, tensor, idx, step, signature)
        err = relative_error(analytic.reshape(-1)[idx][~crossed], num[~crossed], floor)
        report.errors[name] = float(err.max()) if err.size else 0.0
        report.checked[name] = int((~crossed).sum())
        report.skipped[name] = int(crossed.sum())
    return report
