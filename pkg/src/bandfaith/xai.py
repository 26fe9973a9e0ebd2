"""Attribution methods over (T, F) input grids, normalisation and band relevance.

Every method takes a score function ``f`` with ``f(x) -> float`` and
``f.gradient(x) -> grid``; Grad-CAM additionally needs
``f.layer_activations(x, layer)``. :class:`bandfaith.model.ScoreFunction`
provides all three.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dsp import grid_to_csv
from .errors import LayerNotFound, NonFiniteGradient, WindowTooLarge
from .rng import make_rng


class Method(str, enum.Enum):
    INTEGRATED_GRADIENTS = "integrated_gradients"
    OCCLUSION = "occlusion"
    GRAD_CAM = "grad_cam"
    SMOOTHGRAD = "smoothgrad"

    @property
    def gradient_based(self) -> bool:
        return self is not Method.OCCLUSION


METHOD_NAMES = tuple(m.value for m in Method)


@dataclass(frozen=True)
class XaiConfig:
    ig_steps: int = 64
    occlusion_window: tuple = (8, 64)
    occlusion_stride: Optional[tuple] = None  # None -> same as window
    occlusion_fill: float = 0.0
    smoothgrad_samples: int = 25
    smoothgrad_sigma: float = 0.1  # fraction of the input's value range
    gradcam_layer: str = "last_conv"
    normalization: str = "abs"  # or "clip"

    def __post_init__(self):
        object.__setattr__(self, "occlusion_window", tuple(self.occlusion_window))
        if self.occlusion_stride is not None:
            object.__setattr__(self, "occlusion_stride", tuple(self.occlusion_stride))
        if self.ig_steps < 1 or self.smoothgrad_samples < 1:
            raise ValueError("ig_steps and smoothgrad_samples must be >= 1")
        if self.smoothgrad_sigma < 0:
            raise ValueError("smoothgrad_sigma must be >= 0")
        if min(self.occlusion_window) < 1 or min(self.stride) < 1:
            raise ValueError("occlusion window and stride must be positive")
        if self.normalization not in ("abs", "clip"):
            raise ValueError(f"normalization must be 'abs' or 'clip', got {self.normalization!r}")

    @property
    def stride(self) -> tuple:
        return self.occlusion_stride if self.occlusion_stride is not None else self.occlusion_window


@dataclass
class AttributionMap:
    raw: np.ndarray
    normalized: np.ndarray
    method: Method
    params: dict = field(default_factory=dict)


def normalize_map(raw, mode: str = "abs") -> np.ndarray:
    """Non-negative map summing to one.

    ``abs`` takes magnitudes, ``clip`` drops negative relevance. A map with no
    mass becomes uniform.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("relevance map contains non-finite values")
    v = np.abs(raw) if mode == "abs" else np.maximum(raw, 0.0)
    total = v.sum()
    if total == 0:
        return np.full(raw.shape, 1.0 / raw.size)
    return v / total


def _finished(raw, method: Method, cfg: XaiConfig, **params) -> AttributionMap:
    snapshot = {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()}
    snapshot.update(params)
    return AttributionMap(raw, normalize_map(raw, cfg.normalization), method, snapshot)


def _check_grad(g, what):
    if not np.all(np.isfinite(g)):
        raise NonFiniteGradient(f"non-finite gradient in {what}")
    return g


def _batched_gradients(f, xs: Sequence[np.ndarray], chunk: int = 32):
    batched = getattr(f, "gradients", None)
    if batched is None:
        for x in xs:
            yield f.gradient(x)
        return
    for start in range(0, len(xs), chunk):
        yield from batched(np.stack(xs[start:start + chunk]))


def integrated_gradients(f, x, cfg: XaiConfig = XaiConfig()) -> AttributionMap:
    """Zero-baseline IG with a right-endpoint Riemann sum of ``cfg.ig_steps`` points.

    Path gradients are combined as a running mean, so a constant gradient
    (linear score) yields exactly ``x * gradient``.
    """
    x = np.asarray(x, dtype=np.float64)
    steps = cfg.ig_steps
    path = [x * (i / steps) for i in range(1, steps + 1)]
    mean = np.zeros_like(x)
    for k, g in enumerate(_batched_gradients(f, path), start=1):
        g = _check_grad(g, "integrated gradients")
        mean = g.copy() if k == 1 else mean + (g - mean) / k
    return _finished(x * mean, Method.INTEGRATED_GRADIENTS, cfg)


def occlusion_positions(shape, window, stride) -> list:
    (t, fb), (wt, wf), (st, sf) = shape, window, stride
    if wt > t or wf > fb:
        raise WindowTooLarge(f"occlusion window {window} does not fit input {shape}")
    return [(i, j) for i in range(0, t - wt + 1, st) for j in range(0, fb - wf + 1, sf)]


def occlusion(f, x, cfg: XaiConfig = XaiConfig()) -> AttributionMap:
    """Sliding-window occlusion; overlapping windows are averaged per cell.

    Cells no window covers (a remainder narrower than the stride) get 0.
    """
    x = np.asarray(x, dtype=np.float64)
    wt, wf = cfg.occlusion_window
    base = f(x)
    acc = np.zeros_like(x)
    count = np.zeros_like(x)
    for i, j in occlusion_positions(x.shape, cfg.occlusion_window, cfg.stride):
        occluded = x.copy()
        occluded[i:i + wt, j:j + wf] = cfg.occlusion_fill
        acc[i:i + wt, j:j + wf] += base - f(occluded)
        count[i:i + wt, j:j + wf] += 1
    raw = np.divide(acc, count, out=np.zeros_like(acc), where=count > 0)
    return _finished(raw, Method.OCCLUSION, cfg)


def bilinear_sample(coarse: np.ndarray, rows, cols) -> np.ndarray:
    """Bilinear interpolation of ``coarse`` at fractional (row, col) coordinates.

    Coordinates are clamped to the grid, so values outside the outermost cell
    centres repeat the edge.
    """
    coarse = np.asarray(coarse, dtype=np.float64)
    h, w = coarse.shape
    r = np.clip(np.asarray(rows, dtype=np.float64), 0, h - 1)
    c = np.clip(np.asarray(cols, dtype=np.float64), 0, w - 1)
    r0 = np.minimum(np.floor(r).astype(int), h - 1)
    c0 = np.minimum(np.floor(c).astype(int), w - 1)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    dr, dc = r - r0, c - c0
    top = coarse[r0, c0] * (1 - dc) + coarse[r0, c1] * dc
    bottom = coarse[r1, c0] * (1 - dc) + coarse[r1, c1] * dc
    return top * (1 - dr) + bottom * dr


def upsample_coordinates(coarse_len: int, fine_len: int) -> np.ndarray:
    """Coarse-grid coordinate of each fine cell centre (half-pixel alignment)."""
    return (np.arange(fine_len) + 0.5) * (coarse_len / fine_len) - 0.5


def bilinear_upsample(coarse: np.ndarray, shape) -> np.ndarray:
    h, w = coarse.shape
    rows = upsample_coordinates(h, shape[0])
    cols = upsample_coordinates(w, shape[1])
    return bilinear_sample(coarse, rows[:, None], cols[None, :])


def grad_cam(f, x, cfg: XaiConfig = XaiConfig()) -> AttributionMap:
    x = np.asarray(x, dtype=np.float64)
    if not hasattr(f, "layer_activations"):
        raise LayerNotFound("score function exposes no convolutional layers")
    _, acts, grads = f.layer_activations(x, cfg.gradcam_layer)
    _check_grad(grads, "grad-cam")
    weights = grads.mean(axis=(1, 2))
    coarse = np.maximum(np.tensordot(weights, acts, axes=1), 0.0)
    return _finished(bilinear_upsample(coarse, x.shape), Method.GRAD_CAM, cfg,
                     coarse_shape=list(coarse.shape))


def smoothgrad(f, x, cfg: XaiConfig = XaiConfig(), seed: int = 0) -> AttributionMap:
    """Mean gradient over ``n`` copies of ``x`` with Gaussian noise.

    The noise scale is ``smoothgrad_sigma * (max(x) - min(x))``. The mean is a
    running mean, so identical gradients average back to themselves exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    sigma = cfg.smoothgrad_sigma * float(x.max() - x.min())
    rng = make_rng(seed, "smoothgrad")
    mean = np.zeros_like(x)
    for k in range(1, cfg.smoothgrad_samples + 1):
        noisy = x + rng.standard_normal(x.shape) * sigma if sigma > 0 else x
        g = _check_grad(f.gradient(noisy), "smoothgrad")
        mean = g.copy() if k == 1 else mean + (g - mean) / k
    return _finished(mean, Method.SMOOTHGRAD, cfg, sigma_abs=sigma, seed=seed)


def explain(f, x, method, cfg: XaiConfig = XaiConfig(), seed: int = 0) -> AttributionMap:
    method = Method(method)
    if method is Method.INTEGRATED_GRADIENTS:
        return integrated_gradients(f, x, cfg)
    if method is Method.OCCLUSION:
        return occlusion(f, x, cfg)
    if method is Method.GRAD_CAM:
        return grad_cam(f, x, cfg)
    return smoothgrad(f, x, cfg, seed)


def band_mean_relevance(normalized: np.ndarray, bin_ranges: Sequence[range]) -> np.ndarray:
    """Mean relevance per band: ``sum over (t, f in band) / (T * B)``."""
    m = np.asarray(normalized, dtype=np.float64)
    t = m.shape[0]
    return np.array([m[:, r.start:r.stop].sum() / (t * len(r)) for r in bin_ranges])


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def to_pgm(grid: np.ndarray) -> tuple:
    """8-bit binary PGM with frequency on the vertical axis (low at the bottom).

    Returns ``(bytes, meta)`` where ``meta`` records the min-max scaling.
    """
    grid = np.asarray(grid, dtype=np.float64)
    lo, hi = float(grid.min()), float(grid.max())
    scaled = np.zeros_like(grid) if hi == lo else (grid - lo) / (hi - lo)
    pixels = np.floor(scaled * 255.0 + 0.5).astype(np.uint8).T[::-1]
    height, width = pixels.shape
    blob = f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes()
    meta = {"min": lo, "max": hi, "scale": "min-max to 0..255",
            "orientation": "rows=frequency bins (top=highest), columns=time frames"}
    return blob, meta


def save_map(amap: AttributionMap, stem, extra_meta: Optional[dict] = None) -> None:
    """Write ``stem.csv`` (normalized grid), ``stem.pgm`` and ``stem.json``."""
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    stem.with_suffix(".csv").write_text(grid_to_csv(amap.normalized))
    blob, meta = to_pgm(amap.normalized)
    stem.with_suffix(".pgm").write_bytes(blob)
    meta.update({"method": amap.method.value, "params": amap.params, "grid": "normalized"})
    if extra_meta:
        meta.update(extra_meta)
    stem.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
