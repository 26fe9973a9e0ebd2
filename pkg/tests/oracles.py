"""Independent reference implementations used as test oracles.

Each oracle is written the slow, obvious way and shares no code with the
package beyond plain numpy.
"""

import itertools

import numpy as np


def naive_dft_magnitude(x: np.ndarray, n_fft: int = 1024, hop: int = 512) -> np.ndarray:
    """|DFT| of Hamming-windowed frames by explicit O(N^2) summation."""
    n = np.arange(n_fft)
    window = 0.54 - 0.46 * np.cos(2 * np.pi * n / (n_fft - 1))
    n_frames = (len(x) - n_fft) // hop + 1
    kernel = np.exp(-2j * np.pi * np.outer(np.arange(n_fft // 2 + 1), n) / n_fft)
    out = np.empty((n_frames, n_fft // 2 + 1))
    for t in range(n_frames):
        frame = x[t * hop:t * hop + n_fft] * window
        out[t] = np.abs(kernel @ frame)
    return out


def spearman_closed_form(x, y) -> float:
    """1 - 6 sum d^2 / (n (n^2 - 1)) for tie-free data."""
    x, y = np.asarray(x), np.asarray(y)
    n = len(x)
    rx = np.empty(n)
    ry = np.empty(n)
    rx[np.argsort(x)] = np.arange(1, n + 1)
    ry[np.argsort(y)] = np.arange(1, n + 1)
    d = rx - ry
    return 1.0 - 6.0 * float(np.sum(d * d)) / (n * (n * n - 1))


def permutation_pvalue(x, y) -> float:
    """Two-sided p from every re-ordering of y (tie-free data)."""
    observed = spearman_closed_form(x, y)
    hits = 0
    total = 0
    for perm in itertools.permutations(y):
        total += 1
        if abs(spearman_closed_form(x, perm)) >= abs(observed) - 1e-12:
            hits += 1
    return hits / total


def auc_all_pairs(scores, labels) -> float:
    """Fraction of (anomalous, normal) pairs ranked correctly; ties count 1/2."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    total = 0.0
    pairs = 0
    for p in scores[labels]:
        for q in scores[~labels]:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
            pairs += 1
    return total / pairs


def central_difference(fn, x: np.ndarray, coords, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of scalar ``fn`` at the flat indices ``coords``."""
    out = np.empty(len(coords))
    flat = x.reshape(-1)
    for k, i in enumerate(coords):
        keep = flat[i]
        flat[i] = keep + h
        up = fn(x)
        flat[i] = keep - h
        down = fn(x)
        flat[i] = keep
        out[k] = (up - down) / (2 * h)
    return out


def normwise_relative_error(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(np.max(np.abs(a)), np.max(np.abs(b)))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(a - b)) / scale)


def brute_force_patch_drops(f, x: np.ndarray, window, fill: float = 0.0) -> dict:
    """Score drop for every non-overlapping patch, keyed by its top-left corner."""
    wt, wf = window
    base = f(x)
    drops = {}
    for i in range(0, x.shape[0] - wt + 1, wt):
        for j in range(0, x.shape[1] - wf + 1, wf):
            patched = np.array(x, copy=True)
            patched[i:i + wt, j:j + wf] = fill
            drops[(i, j)] = base - f(patched)
    return drops


def band_of_frequency(freq_hz: float) -> int:
    """Index of the 1600 Hz band holding ``freq_hz``; Nyquist joins the last band."""
    return min(int(freq_hz // 1600.0), 4)
