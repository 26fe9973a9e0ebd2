"""Quantitative faithfulness of attributions against band-masking sensitivity."""

from .ablation import AblationResult, DetectionMetrics, ablation_study, detection_metrics
from .evaluate import (
    OVERALL,
    RANDOM_CONTROL,
    BandSensitivity,
    FaithfulnessRecord,
    SampleEvaluation,
    band_sensitivity,
    delta_pred,
    evaluate_faithfulness,
)
from .report import ablation_csv, ablation_machine_csv, dump_json, faithfulness_csv, faithfulness_json
from .stats import auc, fisher_mean, fisher_z, fisher_z_inverse, pauc, spearman

__all__ = [
    "AblationResult", "DetectionMetrics", "ablation_study", "detection_metrics",
    "OVERALL", "RANDOM_CONTROL", "BandSensitivity", "FaithfulnessRecord", "SampleEvaluation",
    "band_sensitivity", "delta_pred", "evaluate_faithfulness",
    "ablation_csv", "ablation_machine_csv", "dump_json", "faithfulness_csv", "faithfulness_json",
    "auc", "fisher_mean", "fisher_z", "fisher_z_inverse", "pauc", "spearman",
]
