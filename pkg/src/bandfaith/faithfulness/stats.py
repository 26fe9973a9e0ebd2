"""Rank correlation, Fisher aggregation and ROC statistics."""

from __future__ import annotations

import itertools
import logging
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats as sps

from ..errors import DegenerateInput, EmptyList, SingleClass

logger = logging.getLogger(__name__)

EXACT_PERMUTATION_MAX_N = 8
FISHER_CLAMP = 1e-7


class SpearmanResult(NamedTuple):
    rho: float
    p: float


def rankdata(x) -> np.ndarray:
    """1-based ranks, ties share their average rank."""
    return sps.rankdata(np.asarray(x, dtype=np.float64), method="average")


def _pearson(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pearson correlation of ``a`` (n,) against each row of ``b`` (..., n)."""
    da = a - a.mean()
    db = b - b.mean(axis=-1, keepdims=True)
    r = (db @ da) / np.sqrt((da @ da) * np.sum(db * db, axis=-1))
    return np.clip(r, -1.0, 1.0)


@lru_cache(maxsize=None)
def _permutations(n: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp)


def spearman(x: Sequence[float], y: Sequence[float]) -> SpearmanResult:
    """Spearman rho with a two-tailed p-value.

    rho is the Pearson correlation of average ranks. For n <= 8 the p-value is
    exact, from all n! re-orderings of the y ranks; beyond that it uses the
    t approximation with n - 2 degrees of freedom.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"spearman needs two equal-length vectors, got {x.shape} and {y.shape}")
    n = x.size
    if n < 3:
        raise ValueError(f"spearman needs n >= 3, got {n}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("spearman inputs must be finite")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise DegenerateInput("constant vector: rank correlation undefined")
    rx, ry = rankdata(x), rankdata(y)
    rho = float(_pearson(rx, ry[None, :])[0])
    return SpearmanResult(rho, spearman_pvalue(rho, rx, ry))


def spearman_pvalue(rho: float, rx: np.ndarray, ry: np.ndarray) -> float:
    n = rx.size
    if n <= EXACT_PERMUTATION_MAX_N:
        null = _pearson(rx, ry[_permutations(n)])
        return float(np.mean(np.abs(null) >= abs(rho) - 1e-12))
    if abs(rho) >= 1.0:
        return 0.0
    t = rho * np.sqrt((n - 2) / (1.0 - rho * rho))
    return float(min(1.0, 2.0 * sps.t.sf(abs(t), n - 2)))


def fisher_z(rho: float) -> float:
    """``0.5 * ln((1 + rho) / (1 - rho))``; |rho| = 1 is clamped to 1 - 1e-7."""
    rho = float(rho)
    if not -1.0 <= rho <= 1.0:
        raise ValueError(f"correlation {rho} outside [-1, 1]")
    if abs(rho) > 1.0 - FISHER_CLAMP:
        logger.warning("clamping correlation %r to +-(1 - %g) before the Fisher transform", rho, FISHER_CLAMP)
        rho = float(np.sign(rho)) * (1.0 - FISHER_CLAMP)
    return float(np.arctanh(rho))


def fisher_z_inverse(z: float) -> float:
    """``(e^{2z} - 1) / (e^{2z} + 1)``, evaluated as tanh for stability."""
    return float(np.tanh(z))


def fisher_mean(rhos: Sequence[float]) -> float:
    """Correlation whose Fisher z is the mean of the inputs' z values."""
    rhos = [float(r) for r in rhos]
    if not rhos:
        raise EmptyList("fisher_mean of an empty list")
    arr = np.array(rhos)
    clamped = int(np.sum(np.abs(arr) > 1.0 - FISHER_CLAMP))
    if clamped:
        logger.warning("fisher_mean: %d of %d correlations clamped to +-(1 - %g)", clamped, len(rhos), FISHER_CLAMP)
    arr = np.clip(arr, -(1.0 - FISHER_CLAMP), 1.0 - FISHER_CLAMP)
    return fisher_z_inverse(float(np.mean(np.arctanh(arr))))


# ---------------------------------------------------------------------------
# ROC
# ---------------------------------------------------------------------------


def _split_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and equally long")
    if labels.all() or not labels.any():
        raise SingleClass("AUC needs both anomalous (True) and normal (False) samples")
    return scores, labels


def auc(scores, labels) -> float:
    """ROC AUC via the rank-sum statistic; ties count one half.

    ``labels`` are truthy for anomalous samples, which should score higher.
    """
    scores, labels = _split_labels(scores, labels)
    ranks = rankdata(scores)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def roc_curve(scores, labels) -> tuple:
    """(fpr, tpr) vertices, one per distinct threshold, starting at (0, 0)."""
    scores, labels = _split_labels(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s, l = scores[order], labels[order]
    last_of_group = np.r_[np.nonzero(np.diff(s))[0], s.size - 1]
    tp = np.cumsum(l)[last_of_group]
    fp = np.cumsum(~l)[last_of_group]
    return np.r_[0.0, fp / (~labels).sum()], np.r_[0.0, tp / labels.sum()]


def pauc(scores, labels, max_fpr: float = 0.1) -> float:
    """Area under the ROC curve for FPR in [0, max_fpr], divided by max_fpr."""
    if not 0 < max_fpr <= 1:
        raise ValueError(f"max_fpr must be in (0, 1], got {max_fpr}")
    fpr, tpr = roc_curve(scores, labels)
    stop = int(np.searchsorted(fpr, max_fpr, side="right"))
    xs, ys = fpr[:stop], tpr[:stop]
    if xs[-1] < max_fpr:
        # cut the segment that crosses max_fpr
        x0, y0, x1, y1 = fpr[stop - 1], tpr[stop - 1], fpr[stop], tpr[stop]
        xs = np.r_[xs, max_fpr]
        ys = np.r_[ys, y0 + (y1 - y0) * (max_fpr - x0) / (x1 - x0)]
    # vertical segments (equal fpr) contribute no area
    area = float(np.sum(np.diff(xs) * (ys[1:] + ys[:-1]) / 2.0))
    return area / max_fpr
