"""Band-ablation retraining: train and test with one band zeroed, compare AUC/pAUC."""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
from scipy.stats import hmean

from ..audio_io import LabeledClip
from ..dsp import BANDS, StftConfig
from ..model import ModelConfig, ScorerModel, TrainConfig, clip_spectrograms, prepare_input, scores_for_grids, train
from .stats import auc, pauc

logger = logging.getLogger(__name__)

FULL_SPECTRUM = "full"


def condition_name(masked_band: Optional[int]) -> str:
    return FULL_SPECTRUM if masked_band is None else f"band{masked_band + 1}"


@dataclass
class DetectionMetrics:
    per_machine_auc: dict
    per_machine_pauc: dict
    mean_auc: float
    mean_pauc: float


@dataclass
class AblationResult:
    condition: str
    masked_band: Optional[int]
    per_machine_auc: dict
    per_machine_pauc: dict
    mean_auc: float
    mean_pauc: float
    delta_mean_auc: float = 0.0
    # train and test inputs both pass through the same mask (set by construction)
    masked_train_and_test: bool = True


def score_clips(model: ScorerModel, clips: Sequence[LabeledClip], specs, batch_size: int = 32) -> np.ndarray:
    scores = np.empty(len(clips))
    machines = sorted({c.machine_id for c in clips})
    for m in machines:
        idx = [i for i, c in enumerate(clips) if c.machine_id == m]
        for start in range(0, len(idx), batch_size):
            chunk = idx[start:start + batch_size]
            grids = np.stack([prepare_input(model, specs[i]) for i in chunk])
            scores[chunk] = scores_for_grids(model, grids, m)
    return scores


def _mean(values, harmonic: bool) -> float:
    values = list(values)
    if harmonic:
        return float(hmean(np.maximum(values, 1e-12)))
    return float(np.mean(values))


def detection_metrics(model: ScorerModel, clips: Sequence[LabeledClip], specs=None, max_fpr: float = 0.1,
                      harmonic_mean: bool = False) -> DetectionMetrics:
    """Per-machine AUC/pAUC of the anomaly score on labelled test clips."""
    specs = specs if specs is not None else clip_spectrograms(clips, model.stft)
    scores = score_clips(model, clips, specs)
    labels = np.array([c.is_anomalous for c in clips])
    aucs, paucs = {}, {}
    for m in sorted({c.machine_id for c in clips}):
        sel = np.array([c.machine_id == m for c in clips])
        aucs[m] = auc(scores[sel], labels[sel])
        paucs[m] = pauc(scores[sel], labels[sel], max_fpr)
    return DetectionMetrics(aucs, paucs, _mean(aucs.values(), harmonic_mean), _mean(paucs.values(), harmonic_mean))


def ablation_study(train_clips: Sequence[LabeledClip], test_clips: Sequence[LabeledClip],
                   cfg: TrainConfig = TrainConfig(), bands=None, model_cfg: Optional[ModelConfig] = None,
                   stft: StftConfig = StftConfig(), max_fpr: float = 0.1, harmonic_mean: bool = False,
                   full_model: Optional[ScorerModel] = None) -> list:
    """Full spectrum plus one retrained condition per band.

    Each condition retrains from ``cfg.seed`` with the band zeroed in every
    training and test input. ``full_model`` may supply an already trained
    full-spectrum model built from the same clips and config.
    """
    bands = list(range(len(BANDS))) if bands is None else [b.index if hasattr(b, "index") else int(b) for b in bands]
    train_specs = clip_spectrograms(train_clips, stft)
    test_specs = clip_spectrograms(test_clips, stft)
    results = []
    for masked in [None] + bands:
        name = condition_name(masked)
        if masked is None and full_model is not None:
            model = full_model
        else:
            logger.info("ablation: training condition %s", name)
            model = train(train_clips, replace(cfg, masked_band=masked), model_cfg, stft, train_specs)
        if model.masked_band != masked:
            raise ValueError(f"model for condition {name} has masked_band={model.masked_band}")
        metrics = detection_metrics(model, test_clips, test_specs, max_fpr, harmonic_mean)
        results.append(AblationResult(name, masked, metrics.per_machine_auc, metrics.per_machine_pauc,
                                      metrics.mean_auc, metrics.mean_pauc))
    full_auc = results[0].mean_auc
    for r in results:
        r.delta_mean_auc = r.mean_auc - full_auc
    return results
