"""Accuracy, per-class precision/recall/F1, macro and weighted averages."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..rejection import UNKNOWN

REJECTION_MODES = ("off", "as-error")


@dataclass
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self):
        return {"precision": self.precision, "recall": self.recall, "f1-score": self.f1,
                "support": self.support}


@dataclass
class Metrics:
    vocabulary: tuple[str, ...]
    rejection_mode: str
    accuracy: float
    per_class: dict[str, ClassScores]
    macro: ClassScores
    weighted: ClassScores
    confusion: np.ndarray
    columns: tuple[str, ...]
    rejection_rate: float
    zero_division: list[str] = field(default_factory=list)

    @property
    def macro_f1(self) -> float:
        return self.macro.f1

    def to_dict(self) -> dict:
        return {
            "rejection_mode": self.rejection_mode,
            "accuracy": self.accuracy,
            "classes": {k: v.to_dict() for k, v in self.per_class.items()},
            "macro avg": self.macro.to_dict(),
            "weighted avg": self.weighted.to_dict(),
            "confusion_matrix": {"rows": list(self.vocabulary), "columns": list(self.columns),
                                 "counts": self.confusion.tolist()},
            "rejection_rate": self.rejection_rate,
            "zero_division": self.zero_division,
        }


def _ratio(num, den, flag, flags):
    if den == 0:
        flags.append(flag)
        return 0.0
    return num / den


def compute_metrics(pairs, vocabulary, rejection_mode: str = "off") -> Metrics:
    """Score ``(true_label, Prediction)`` pairs.

    With ``rejection_mode="off"`` the raw argmax label is scored and thresholds
    are ignored. With ``"as-error"`` a rejected sample counts against accuracy
    and recall, lands in an extra ``unknown`` column, and never counts as a
    predicted class for precision.
    """
    if rejection_mode not in REJECTION_MODES:
        raise ValueError(f"rejection_mode must be one of {REJECTION_MODES}")
    vocabulary = tuple(vocabulary)
    columns = vocabulary + ((UNKNOWN,) if rejection_mode == "as-error" else ())
    col = {c: i for i, c in enumerate(columns)}
    k = len(vocabulary)
    cm = np.zeros((k, len(columns)), dtype=np.int64)
    rejected = 0
    for truth, pred in pairs:
        if truth not in vocabulary:
            raise ValueError(f"true label {truth!r} is not in the vocabulary")
        label = pred.raw_label if rejection_mode == "off" else pred.label
        if label not in col:
            raise ValueError(f"predicted label {label!r} is not in the vocabulary")
        cm[vocabulary.index(truth), col[label]] += 1
        rejected += not pred.accepted
    total = int(cm.sum())
    if total == 0:
        raise ValueError("no predictions to score")

    flags: list[str] = []
    tp = np.diag(cm[:, :k]).astype(np.float64)
    predicted = cm[:, :k].sum(axis=0)
    support = cm.sum(axis=1)
    per_class = {}
    for i, name in enumerate(vocabulary):
        p = _ratio(tp[i], predicted[i], f"{name}.precision", flags)
        r = _ratio(tp[i], support[i], f"{name}.recall", flags)
        f = _ratio(2 * p * r, p + r, f"{name}.f1", flags)
        per_class[name] = ClassScores(p, r, f, int(support[i]))

    stack = np.array([[s.precision, s.recall, s.f1] for s in per_class.values()])
    macro = ClassScores(*stack.mean(axis=0), total)
    weighted = ClassScores(*(support / total) @ stack, total)
    return Metrics(vocabulary, rejection_mode, float(tp.sum() / total), per_class, macro,
                   weighted, cm, columns, rejected / total, flags)
