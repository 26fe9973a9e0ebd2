"""STFT magnitude spectrograms, the five 1600 Hz bands, masking and normalisation."""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio_io import BAND_WIDTH_HZ, N_BANDS, Waveform
from .errors import SignalTooShort, StatsShapeMismatch, UnsupportedSampleRate

BAND_SAMPLE_RATE = 16000
STD_FLOOR = 1e-6


@dataclass(frozen=True)
class StftConfig:
    fft_size: int = 1024
    hop: int = 512

    def __post_init__(self):
        n = self.fft_size
        if n < 2 or n & (n - 1):
            raise ValueError(f"fft_size must be a power of two, got {n}")
        if not 0 < self.hop <= n:
            raise ValueError(f"hop must be in (0, fft_size], got {self.hop}")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    @property
    def window(self) -> np.ndarray:
        # classic Hamming, 0.54 - 0.46 cos(2 pi n / (N - 1))
        return np.hamming(self.fft_size)


@dataclass
class Spectrogram:
    mag: np.ndarray
    sample_rate_hz: int
    config: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        self.mag = np.asarray(self.mag, dtype=np.float64)
        if self.mag.ndim != 2 or self.mag.shape[1] != self.config.n_bins:
            raise ValueError(f"magnitude grid {self.mag.shape} does not have {self.config.n_bins} bins")
        if not np.all(np.isfinite(self.mag)) or np.any(self.mag < 0):
            raise ValueError("magnitudes must be finite and non-negative")

    @property
    def n_frames(self) -> int:
        return self.mag.shape[0]


@dataclass(frozen=True)
class FrequencyBand:
    index: int
    low_hz: float
    high_hz: float

    @property
    def label(self) -> str:
        return f"{self.low_hz:g}-{self.high_hz:g}Hz"


BANDS = tuple(
    FrequencyBand(i, i * BAND_WIDTH_HZ, (i + 1) * BAND_WIDTH_HZ) for i in range(N_BANDS)
)


def stft_magnitude(w: Waveform, cfg: StftConfig = StftConfig()) -> Spectrogram:
    """|STFT| with a Hamming window, frames ``[mH, mH + N)``, no padding."""
    x = w.samples
    n, hop = cfg.fft_size, cfg.hop
    if len(x) < n:
        raise SignalTooShort(f"{len(x)} samples < fft_size {n}")
    frames = sliding_window_view(x, n)[::hop]
    mag = np.abs(np.fft.rfft(frames * cfg.window, axis=1))
    return Spectrogram(mag, w.sample_rate_hz, cfg)


def band_to_bins(band: FrequencyBand, cfg: StftConfig = StftConfig(), fs: int = BAND_SAMPLE_RATE) -> range:
    """Bins whose centre ``k * fs / N`` lies in ``[low, high)``; Nyquist goes to the top band."""
    if fs != BAND_SAMPLE_RATE:
        raise UnsupportedSampleRate(f"band scheme is defined for {BAND_SAMPLE_RATE} Hz, got {fs}")
    n = cfg.fft_size
    # exact integer arithmetic on k * fs / N >= low  <=>  k * fs >= low * N
    first = -(-int(band.low_hz * n) // fs)
    stop = -(-int(band.high_hz * n) // fs)
    if band.index == N_BANDS - 1:
        stop = n // 2 + 1
    return range(first, min(stop, n // 2 + 1))


def band_bin_ranges(cfg: StftConfig = StftConfig(), fs: int = BAND_SAMPLE_RATE) -> list[range]:
    return [band_to_bins(b, cfg, fs) for b in BANDS]


def mask_grid(grid: np.ndarray, bins: range) -> np.ndarray:
    """Copy of ``grid`` (..., F) with the given frequency bins set to exactly 0."""
    out = np.array(grid, dtype=np.float64, copy=True)
    out[..., bins.start:bins.stop] = 0.0
    return out


def mask_band(s: Spectrogram, band: FrequencyBand) -> Spectrogram:
    bins = band_to_bins(band, s.config, s.sample_rate_hz)
    return Spectrogram(mask_grid(s.mag, bins), s.sample_rate_hz, s.config)


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.maximum(np.asarray(self.std, dtype=np.float64), STD_FLOOR)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise StatsShapeMismatch(f"mean {self.mean.shape} vs std {self.std.shape}")


def fit_norm_stats(spectrograms: Iterable[Spectrogram]) -> NormStats:
    """Per-bin mean/std over every frame of the (normal, training) spectrograms."""
    mags = [s.mag for s in spectrograms]
    if not mags:
        raise ValueError("need at least one spectrogram to fit normalisation stats")
    stacked = np.concatenate(mags, axis=0)
    return NormStats(stacked.mean(axis=0), stacked.std(axis=0))


def normalize_input(s, stats: NormStats) -> np.ndarray:
    """``(mag - mean_k) / std_k`` per bin; accepts a Spectrogram or a raw (T, F) grid."""
    mag = s.mag if isinstance(s, Spectrogram) else np.asarray(s, dtype=np.float64)
    if mag.shape[-1] != stats.mean.shape[0]:
        raise StatsShapeMismatch(f"spectrogram has {mag.shape[-1]} bins, stats have {stats.mean.shape[0]}")
    return (mag - stats.mean) / stats.std


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<IIII")  # T, F, fs, N


def spectrogram_to_bytes(s: Spectrogram) -> bytes:
    t, f = s.mag.shape
    return _HEADER.pack(t, f, s.sample_rate_hz, s.config.fft_size) + s.mag.astype("<f4").tobytes()


def spectrogram_from_bytes(blob: bytes, hop: int = StftConfig.hop) -> Spectrogram:
    t, f, fs, n = _HEADER.unpack_from(blob, 0)
    expected = _HEADER.size + 4 * t * f
    if len(blob) != expected:
        raise ValueError(f"spectrogram blob has {len(blob)} bytes, header implies {expected}")
    mag = np.frombuffer(blob, dtype="<f4", offset=_HEADER.size).reshape(t, f).astype(np.float64)
    return Spectrogram(mag, fs, StftConfig(n, hop))


def grid_to_csv(grid: np.ndarray) -> str:
    """One row per time frame, ``repr``-exact floats."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(grid, dtype=np.float64):
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def grid_from_csv(text: str) -> np.ndarray:
    rows = [list(map(float, r)) for r in csv.reader(io.StringIO(text)) if r]
    return np.array(rows, dtype=np.float64)
