"""Band-masking sensitivity and its rank agreement with attribution relevance."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from ..audio_io import LabeledClip
from ..dsp import band_bin_ranges, mask_grid, stft_magnitude
from ..errors import DegenerateInput
from ..model import ScoreFunction, ScorerModel, prepare_input
from ..rng import make_rng
from ..xai import Method, XaiConfig, band_mean_relevance, explain, normalize_map
from .stats import fisher_mean, spearman

logger = logging.getLogger(__name__)

RANDOM_CONTROL = "random"
OVERALL = "overall"


@dataclass
class BandSensitivity:
    sample_id: str
    machine_id: str
    delta_pred: np.ndarray
    pred_original: float


def band_sensitivity(f: Callable, x: np.ndarray, bin_ranges: Sequence[range]) -> tuple:
    """``(f(x), [|f(x) - f(x with band b zeroed)| for b])``."""
    base = f(x)
    deltas = np.array([abs(base - f(mask_grid(x, bins))) for bins in bin_ranges])
    return base, deltas


def delta_pred(model: ScorerModel, s, machine_id: str, sample_id: str = "") -> BandSensitivity:
    """ΔPred for each band on the model's centre crop of spectrogram ``s``."""
    f = ScoreFunction(model, machine_id)
    x = prepare_input(model, s)
    base, deltas = band_sensitivity(f, x, band_bin_ranges(model.stft, model.sample_rate_hz))
    return BandSensitivity(sample_id, machine_id, deltas, base)


def random_relevance_map(shape, seed: int, sample_id: str) -> np.ndarray:
    """Null control: a seeded uniform-random map, normalised like an attribution."""
    return normalize_map(make_rng(seed, "random-map", sample_id).random(shape))


@dataclass
class SampleEvaluation:
    sample_id: str
    machine_id: str
    anomalous: bool
    sensitivity: BandSensitivity
    relevance: dict = field(default_factory=dict)   # method -> 5-vector
    rho: dict = field(default_factory=dict)         # method -> (rho, p) or None


@dataclass
class FaithfulnessRecord:
    machine_id: str
    method: str
    per_sample_rho: list          # [(sample_id, rho, p)]; rho/p None when degenerate
    rho_bar: Optional[float]
    pooled_rho: Optional[float]
    pooled_p: Optional[float]
    n_samples: int
    degenerate_count: int
    normalization: str = "abs"


def sample_id_of(clip: LabeledClip, index: int) -> str:
    return clip.source_path or f"sample-{index:05d}"


def evaluate_sample(model: ScorerModel, clip: LabeledClip, sample_id: str, methods: Sequence[str],
                    cfg: XaiConfig, seed: int) -> SampleEvaluation:
    bins = band_bin_ranges(model.stft, model.sample_rate_hz)
    f = ScoreFunction(model, clip.machine_id)
    x = prepare_input(model, stft_magnitude(clip.waveform, model.stft))
    base, deltas = band_sensitivity(f, x, bins)
    result = SampleEvaluation(sample_id, clip.machine_id, clip.is_anomalous,
                              BandSensitivity(sample_id, clip.machine_id, deltas, base))
    for method in methods:
        if method == RANDOM_CONTROL:
            normalized = random_relevance_map(x.shape, seed, sample_id)
        else:
            normalized = explain(f, x, method, cfg, seed=sample_seed(seed, sample_id)).normalized
        relevance = band_mean_relevance(normalized, bins)
        result.relevance[method] = relevance
        try:
            result.rho[method] = tuple(spearman(relevance, deltas))
        except DegenerateInput:
            result.rho[method] = None
    return result


def sample_seed(seed: int, sample_id: str) -> int:
    return int(make_rng(seed, "sample", sample_id).integers(2 ** 31))


def _record(machine_id: str, method: str, samples: Sequence[SampleEvaluation], normalization: str,
            rho_bar: Optional[float] = None) -> FaithfulnessRecord:
    per_sample = []
    valid = []
    for s in samples:
        r = s.rho[method]
        per_sample.append((s.sample_id, None, None) if r is None else (s.sample_id, r[0], r[1]))
        if r is not None:
            valid.append(r[0])
    if rho_bar is None and valid:
        rho_bar = fisher_mean(valid)
    rel = np.concatenate([s.relevance[method] for s in samples])
    dp = np.concatenate([s.sensitivity.delta_pred for s in samples])
    try:
        pooled_rho, pooled_p = spearman(rel, dp)
    except (DegenerateInput, ValueError):
        pooled_rho = pooled_p = None
    return FaithfulnessRecord(machine_id, method, per_sample, rho_bar, pooled_rho, pooled_p,
                              len(samples), len(samples) - len(valid), normalization)


def evaluate_faithfulness(model: ScorerModel, clips: Sequence[LabeledClip], methods: Sequence[str],
                          cfg: XaiConfig = XaiConfig(), seed: int = 0, jobs: int = 1):
    """Per (machine, method) faithfulness records plus one ``overall`` record per method.

    Returns ``(records, samples)``. Per-sample rho is the Spearman correlation
    over the five (band relevance, ΔPred) pairs of one sample; ``rho_bar`` is
    their Fisher mean with degenerate samples excluded. ``pooled_*`` is a single
    Spearman test over all (sample, band) pairs. The overall record's rho_bar
    is the Fisher mean of the per-machine rho_bar values.
    """
    methods = [m if m == RANDOM_CONTROL else Method(m).value for m in methods]
    ids = [sample_id_of(c, i) for i, c in enumerate(clips)]

    def work(i):
        return evaluate_sample(model, clips[i], ids[i], methods, cfg, seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            samples = list(pool.map(work, range(len(clips))))
    else:
        samples = [work(i) for i in range(len(clips))]

    records = []
    machines = sorted({s.machine_id for s in samples})
    for method in methods:
        per_machine = []
        for m in machines:
            rec = _record(m, method, [s for s in samples if s.machine_id == m], cfg.normalization)
            per_machine.append(rec)
            records.append(rec)
        bars = [r.rho_bar for r in per_machine if r.rho_bar is not None]
        overall = _record(OVERALL, method, samples, cfg.normalization,
                          rho_bar=fisher_mean(bars) if bars else None)
        records.append(overall)
    return records, samples
