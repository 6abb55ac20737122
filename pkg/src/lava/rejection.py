"""Confidence thresholds calibrated on training-set softmax scores."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNKNOWN = "unknown"


@dataclass(frozen=True)
class CalibrationRecord:
    confidence: float
    correct: bool

    def __post_init__(self):
        if not 0.0 < self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in (0, 1], got {self.confidence}")


@dataclass(frozen=True)
class RejectionThreshold:
    """``tau is None`` is the reject-all sentinel (calibration failed)."""

    level: str
    tau: float | None
    target_acc: float = 0.85
    n_records: int = 0
    accepted_fraction: float = 0.0
    accepted_accuracy: float = 0.0

    @property
    def failed(self) -> bool:
        return self.tau is None

    def accepts(self, confidence: float) -> bool:
        return self.tau is not None and confidence >= self.tau

    def tau_string(self) -> str:
        return "reject-all" if self.tau is None else repr(float(self.tau))

    def to_dict(self) -> dict:
        return {"level": self.level, "tau": self.tau_string(),
                "target_acc": repr(float(self.target_acc)), "failed": self.failed,
                "n_records": self.n_records,
                "accepted_fraction": self.accepted_fraction,
                "accepted_accuracy": self.accepted_accuracy}

    @classmethod
    def from_dict(cls, d: dict) -> RejectionThreshold:
        tau = None if d["tau"] == "reject-all" else float(d["tau"])
        return cls(d["level"], tau, float(d["target_acc"]), int(d["n_records"]),
                   float(d["accepted_fraction"]), float(d["accepted_accuracy"]))


def calibrate_threshold(records, target_acc: float = 0.85,
                        level: str = "") -> RejectionThreshold:
    """Smallest confidence cutoff whose accepted subset reaches ``target_acc``.

    Candidates are the distinct confidence values; a record is accepted when
    its confidence is >= the cutoff. Sorting by descending confidence turns
    each candidate's accepted set into a prefix, so one cumulative pass over
    the groups of tied confidences suffices.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot calibrate on an empty record set")
    if not 0.0 < target_acc <= 1.0:
        raise ValueError(f"target accuracy must lie in (0, 1], got {target_acc}")
    conf = np.array([r.confidence for r in records], dtype=np.float64)
    ok = np.array([r.correct for r in records], dtype=np.int64)
    order = np.argsort(-conf, kind="stable")
    conf, ok = conf[order], ok[order]
    # last index of each run of equal confidences
    ends = np.flatnonzero(np.append(conf[1:] != conf[:-1], True))
    hits = np.cumsum(ok)[ends]
    sizes = ends + 1
    good = hits / sizes >= target_acc
    n = len(records)
    if not good.any():
        return RejectionThreshold(level, None, target_acc, n, 0.0, 0.0)
    g = np.flatnonzero(good)[-1]
    return RejectionThreshold(level, float(conf[ends[g]]), target_acc, n,
                              sizes[g] / n, hits[g] / sizes[g])


def exhaustive_threshold(records, target_acc: float = 0.85) -> float | None:
    """Reference scan: try every distinct confidence, keep the smallest that qualifies."""
    best = None
    for tau in sorted({r.confidence for r in records}):
        accepted = [r for r in records if r.confidence >= tau]
        acc = sum(r.correct for r in accepted) / len(accepted)
        if acc >= target_acc and (best is None or tau < best):
            best = tau
    return best


@dataclass(frozen=True)
class Prediction:
    label: str
    confidence: float
    raw_label: str
    accepted: bool
    index: int = -1
    probs: tuple[float, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if not self.accepted and self.label != UNKNOWN:
            raise ValueError("a rejected prediction must carry the 'unknown' label")

    def to_dict(self) -> dict:
        return {"label": self.label, "confidence": self.confidence,
                "raw_label": self.raw_label, "accepted": self.accepted}


def decide(probs, vocabulary, tau) -> Prediction:
    """Accept the argmax class iff its probability is >= ``tau``.

    ``tau`` may be a float, a RejectionThreshold or None (reject everything).
    """
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or len(p) != len(vocabulary):
        raise ValueError(f"expected {len(vocabulary)} probabilities, got shape {p.shape}")
    if abs(p.sum() - 1.0) > 1e-5:
        raise ValueError(f"probabilities sum to {p.sum()}, not 1")
    if isinstance(tau, RejectionThreshold):
        tau = tau.tau
    i = int(np.argmax(p))
    conf = float(p[i])
    accepted = tau is not None and conf >= tau
    return Prediction(vocabulary[i] if accepted else UNKNOWN, conf, vocabulary[i],
                      accepted, i, tuple(p.tolist()))


def collect_confidences(probs, labels) -> list[CalibrationRecord]:
    """One record per row of ``probs`` (N, n_classes) against integer ``labels``."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if len(probs) == 0:
        raise ValueError("no samples to collect confidences from")
    pred = probs.argmax(axis=1)
    conf = probs[np.arange(len(probs)), pred]
    return [CalibrationRecord(float(c), bool(p == y)) for c, p, y in zip(conf, pred, labels)]
