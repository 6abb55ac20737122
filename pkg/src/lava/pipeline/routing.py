"""Two-level inference: technology attribution, then codec-model recognition."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rejection import UNKNOWN, Prediction, RejectionThreshold, decide
from ..training import ConfigError

CODEC = "Codec"


@dataclass(frozen=True)
class PipelineResult:
    ada: Prediction
    admr: Prediction | None
    technology: str
    model: str | None

    def __post_init__(self):
        routed = self.ada.accepted and self.ada.label == CODEC
        if routed != (self.admr is not None):
            raise ValueError("ADMR result must exist exactly when ADA accepted Codec")
        if self.technology != self.ada.label:
            raise ValueError("final technology must mirror the ADA decision")

    def to_dict(self) -> dict:
        return {"ada": self.ada.to_dict(),
                "admr": self.admr.to_dict() if self.admr else None,
                "attribution": {"technology": self.technology, "model": self.model}}


def route(ada: Prediction, admr_fn) -> PipelineResult:
    """Combine an ADA decision with a lazily computed ADMR decision."""
    if not (ada.accepted and ada.label == CODEC):
        return PipelineResult(ada, None, ada.label, None)
    admr = admr_fn()
    return PipelineResult(ada, admr, CODEC, admr.label)


def _tau(t):
    return t.tau if isinstance(t, RejectionThreshold) else t


class Pipeline:
    """Holds both heads and their thresholds.

    A head is anything with a ``vocabulary`` and ``predict_proba(x)`` mapping
    a (N, L) batch to (N, n_classes) probabilities. Real heads also expose
    ``prefix``/``proba_from_prefix`` so the shared frozen encoder layers run
    once per sample.
    """

    def __init__(self, ada, admr, tau_ada, tau_admr):
        self.ada = ada
        self.admr = admr
        self.tau_ada = _tau(tau_ada)
        self.tau_admr = _tau(tau_admr)

    def _shares_prefix(self) -> bool:
        return (hasattr(self.ada, "shares_prefix") and self.admr is not None
                and self.ada.shares_prefix(self.admr))

    def infer_batch(self, x, batch_size: int = 16) -> list[PipelineResult]:
        x = np.asarray(x, dtype=np.float32)
        if x.ndim == 1:
            x = x[None]
        out = []
        for start in range(0, len(x), batch_size):
            xb = x[start:start + batch_size]
            shared = self._shares_prefix()
            h = self.ada.prefix(xb[:, None, :]) if shared else None
            p_ada = self.ada.proba_from_prefix(h) if shared else self.ada.predict_proba(xb)
            ada_preds = [decide(p, self.ada.vocabulary, self.tau_ada) for p in p_ada]
            routed = [i for i, a in enumerate(ada_preds) if a.accepted and a.label == CODEC]
            admr_preds = {}
            if routed:
                if self.admr is None:
                    raise ConfigError("a sample was routed to ADMR but no ADMR head is loaded")
                p_admr = (self.admr.proba_from_prefix(h[routed]) if shared
                          else self.admr.predict_proba(xb[routed]))
                for i, p in zip(routed, p_admr):
                    admr_preds[i] = decide(p, self.admr.vocabulary, self.tau_admr)
            out.extend(route(a, lambda i=i: admr_preds[i]) for i, a in enumerate(ada_preds))
        return out

    def infer(self, samples) -> PipelineResult:
        w = getattr(samples, "samples", samples)
        return self.infer_batch(np.asarray(w)[None])[0]


def infer(samples, ada, admr, tau_ada, tau_admr) -> PipelineResult:
    return Pipeline(ada, admr, tau_ada, tau_admr).infer(samples)


__all__ = ["CODEC", "Pipeline", "PipelineResult", "UNKNOWN", "infer", "route"]
