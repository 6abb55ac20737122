"""Error-propagation and open-set generalization reports."""

from __future__ import annotations

from collections import Counter

import numpy as np

from ..rejection import UNKNOWN
from .routing import CODEC, PipelineResult

REAL = "real"

ERROR_PROPAGATION_DEFINITIONS = {
    "ada_error": ("real sample accepted as any technology, or fake sample rejected "
                  "or attributed to the wrong technology"),
    "forwarded": "ADA accepted the sample as Codec, so ADMR was run",
    "admr_error": ("among forwarded samples: a Codec fake with a model label accepted "
                   "as the wrong model, or any other forwarded sample (real, non-Codec "
                   "fake, or Codec fake without a known model) accepted as any model"),
    "admr_false_reject": "forwarded Codec fake with a known model that ADMR rejected",
}


def _truth(entry) -> str:
    return entry.technology if entry.is_fake else REAL


def _ada_error(entry, res: PipelineResult) -> bool:
    if not entry.is_fake:
        return res.ada.accepted
    return (not res.ada.accepted) or res.ada.label != entry.technology


def _admr_outcome(entry, res: PipelineResult) -> str:
    """One of correct / error / false_reject / correct_reject for a forwarded sample."""
    admr = res.admr
    known = entry.is_fake and entry.technology == CODEC and entry.model is not None
    if known:
        if not admr.accepted:
            return "false_reject"
        return "correct" if admr.label == entry.model else "error"
    return "error" if admr.accepted else "correct_reject"


def _rate(num, den):
    return num / den if den else 0.0


def error_propagation_report(entries, results) -> dict:
    """Account ADA errors and how many of them leak into ADMR."""
    entries, results = list(entries), list(results)
    if not entries:
        raise ValueError("error-propagation evaluation needs a non-empty manifest")
    if len(entries) != len(results):
        raise ValueError("one pipeline result per manifest entry is required")

    classes = sorted({_truth(e) for e in entries}, key=str)
    per_class = {c: Counter() for c in classes}
    ada_columns = ("ASV", "FoR", CODEC, UNKNOWN)
    ada_cm = {c: Counter() for c in classes}
    totals = Counter()
    for e, r in zip(entries, results):
        c = _truth(e)
        row = per_class[c]
        row["samples"] += 1
        ada_cm[c][r.ada.label] += 1
        err = _ada_error(e, r)
        row["ada_errors"] += err
        totals["ada_errors"] += err
        if r.admr is not None:
            row["forwarded"] += 1
            totals["forwarded"] += 1
            outcome = _admr_outcome(e, r)
            row[f"admr_{outcome}"] += 1
            totals[f"admr_{outcome}"] += 1

    n = len(entries)
    fwd = totals["forwarded"]
    report = {
        "definitions": ERROR_PROPAGATION_DEFINITIONS,
        "samples": n,
        "ada_errors": totals["ada_errors"],
        "ada_correct": n - totals["ada_errors"],
        "ada_error_rate": _rate(totals["ada_errors"], n),
        "forwarded": fwd,
        "forwarded_rate": _rate(fwd, n),
        "admr_errors": totals["admr_error"],
        "admr_misclassification_rate": _rate(totals["admr_error"], fwd),
        "admr_false_rejects": totals["admr_false_reject"],
        "admr_correct": totals["admr_correct"],
        "admr_correct_rejects": totals["admr_correct_reject"],
        "ada_confusion": {"rows": classes, "columns": list(ada_columns),
                          "counts": [[ada_cm[c][k] for k in ada_columns] for c in classes]},
        "per_class": {},
    }
    for c in classes:
        row = per_class[c]
        f = row["forwarded"]
        report["per_class"][c] = {
            "samples": row["samples"],
            "ada_errors": row["ada_errors"],
            "ada_error_rate": _rate(row["ada_errors"], row["samples"]),
            "forwarded": f,
            "admr_errors": row["admr_error"],
            "admr_misclassification_rate": _rate(row["admr_error"], f),
            "admr_false_rejects": row["admr_false_reject"],
        }
    return report


def _distribution(labels, vocabulary) -> dict[str, float]:
    counts = Counter(labels)
    n = len(labels)
    return {k: _rate(counts[k], n) for k in vocabulary}


def generalization_report(entries, results, expectation: dict | None = None) -> dict:
    """Rejection and label distributions on samples from an unseen source.

    ``expectation`` maps ``"ada"`` (and optionally ``"admr"``) to the list of
    acceptable final labels, ``"unknown"`` included when rejection counts as
    conforming. A sample conforms when its ADA label is acceptable and, if it
    was forwarded, its ADMR label is too.
    """
    entries, results = list(entries), list(results)
    if not entries:
        raise ValueError("generalization evaluation needs a non-empty manifest")
    if len(entries) != len(results):
        raise ValueError("one pipeline result per manifest entry is required")

    n = len(results)
    ada_vocab = ("ASV", "FoR", CODEC)
    ada_labels = [r.ada.label for r in results]
    accepted = [label for label in ada_labels if label != UNKNOWN]
    forwarded = [r for r in results if r.admr is not None]
    admr_labels = [r.admr.label for r in forwarded]
    admr_vocab = ("F01", "F02", "F03", "F04", "F05", "F06")

    report = {
        "samples": n,
        "ada_rejection_rate": _rate(ada_labels.count(UNKNOWN), n),
        "ada_distribution": _distribution(ada_labels, ada_vocab + (UNKNOWN,)),
        "ada_accepted_distribution": _distribution(accepted, ada_vocab) if accepted else {},
        "forwarded": len(forwarded),
        "admr_distribution": (_distribution(admr_labels, admr_vocab + (UNKNOWN,))
                              if forwarded else {}),
        "admr_rejection_rate": _rate(admr_labels.count(UNKNOWN), len(forwarded)),
    }
    if expectation:
        ok_ada = set(expectation.get("ada", ()))
        ok_admr = expectation.get("admr")
        conforming = 0
        for r in results:
            good = r.ada.label in ok_ada
            if good and r.admr is not None and ok_admr is not None:
                good = r.admr.label in set(ok_admr)
            conforming += good
        report["expectation"] = {k: list(v) for k, v in expectation.items()}
        report["conforming_fraction"] = conforming / n
    return report


def evaluate_arrays(pipeline, x, batch_size: int = 16):
    return pipeline.infer_batch(np.asarray(x, dtype=np.float32), batch_size)


def error_propagation_eval(entries, x, pipeline) -> dict:
    """Run the pipeline on preprocessed samples ``x`` (aligned with ``entries``)."""
    if len(entries) == 0:
        raise ValueError("error-propagation evaluation needs a non-empty manifest")
    return error_propagation_report(entries, evaluate_arrays(pipeline, x))


def generalization_eval(entries, x, pipeline, expectation: dict | None = None) -> dict:
    if len(entries) == 0:
        raise ValueError("generalization evaluation needs a non-empty manifest")
    return generalization_report(entries, evaluate_arrays(pipeline, x), expectation)
