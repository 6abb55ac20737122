"""Hierarchical inference, metrics, evaluation harnesses and full runs."""

from .experiment import DECISIONS, ExperimentConfig, ablation_study, run_experiment
from .harness import (
    ERROR_PROPAGATION_DEFINITIONS,
    error_propagation_eval,
    error_propagation_report,
    generalization_eval,
    generalization_report,
)
from .metrics import REJECTION_MODES, ClassScores, Metrics, compute_metrics
from .routing import CODEC, Pipeline, PipelineResult, infer, route

__all__ = [
    "CODEC", "DECISIONS", "ERROR_PROPAGATION_DEFINITIONS", "ClassScores", "ExperimentConfig",
    "Metrics", "Pipeline", "PipelineResult", "REJECTION_MODES", "ablation_study",
    "compute_metrics",
    "error_propagation_eval", "error_propagation_report", "generalization_eval",
    "generalization_report", "infer", "route", "run_experiment",
]
