"""WAV reading/writing, DCASE-style directory loading and synthetic machine sounds."""

from __future__ import annotations

import enum
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import (
    EmptyAudio,
    EmptyDataset,
    InvalidProfile,
    IoFailure,
    MalformedHeader,
    UnlabeledFile,
    UnsupportedEncoding,
)
from .rng import make_rng

logger = logging.getLogger(__name__)

DEFAULT_SAMPLE_RATE = 16000
BAND_WIDTH_HZ = 1600.0
N_BANDS = 5

_FORMAT_PCM = 0x0001
_FORMAT_FLOAT = 0x0003
_FORMAT_EXTENSIBLE = 0xFFFE


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim != 1:
            raise ValueError(f"waveform must be mono 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.samples.size and np.max(np.abs(self.samples)) > 1.0:
            raise ValueError("waveform samples must lie in [-1, 1]")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        self.sample_rate_hz = int(self.sample_rate_hz)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz


class Condition(str, enum.Enum):
    NORMAL = "normal"
    ANOMALOUS = "anomalous"


@dataclass
class LabeledClip:
    waveform: Waveform
    machine_id: str
    condition: Condition
    source_path: str = ""
    split: str = "test"

    def __post_init__(self):
        if not self.machine_id:
            raise ValueError("machine_id must be non-empty")

    @property
    def is_anomalous(self) -> bool:
        return self.condition is Condition.ANOMALOUS


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------


def read_wav(path) -> Waveform:
    """Read a RIFF/WAVE file (PCM16 or float32) into a mono waveform in [-1, 1].

    Multichannel files keep channel 0 and log a warning.
    """
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeader(f"{path}: not a RIFF/WAVE file")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            if size < 16:
                raise MalformedHeader(f"{path}: fmt chunk too short ({size} bytes)")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
            if fmt[0] == _FORMAT_EXTENSIBLE:
                if size < 40:
                    raise MalformedHeader(f"{path}: truncated WAVE_FORMAT_EXTENSIBLE header")
                (sub,) = struct.unpack_from("<H", body, 24)
                fmt = (sub,) + fmt[1:]
        elif chunk_id == b"data":
            payload = body
        pos += 8 + size + (size & 1)
    if fmt is None:
        raise MalformedHeader(f"{path}: missing fmt chunk")
    if payload is None:
        raise MalformedHeader(f"{path}: missing data chunk")

    format_tag, channels, rate, _, block_align, bits = fmt
    if channels < 1 or rate <= 0:
        raise MalformedHeader(f"{path}: channels={channels} rate={rate}")
    if format_tag == _FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif format_tag == _FORMAT_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedEncoding(f"{path}: format tag {format_tag:#06x} with {bits} bits")
    frame_bytes = dtype.itemsize * channels
    n_frames = len(payload) // frame_bytes
    if n_frames == 0:
        raise EmptyAudio(f"{path}: data chunk holds no samples")
    raw = np.frombuffer(payload[:n_frames * frame_bytes], dtype=dtype).reshape(n_frames, channels)
    if channels > 1:
        logger.warning("%s has %d channels; using channel 0", path, channels)
    samples = raw[:, 0].astype(np.float64) * scale
    if format_tag == _FORMAT_FLOAT:
        if not np.all(np.isfinite(samples)):
            raise UnsupportedEncoding(f"{path}: non-finite float samples")
        samples = np.clip(samples, -1.0, 1.0)
    return Waveform(samples, rate)


def quantize_pcm16(samples) -> np.ndarray:
    """Clamp to [-1, 1] and round half away from zero onto the int16 grid."""
    x = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0) * 32768.0
    q = np.sign(x) * np.floor(np.abs(x) + 0.5)
    return np.clip(q, -32768, 32767).astype("<i2")


def write_wav(path, w: Waveform) -> None:
    """Write ``w`` as 16-bit PCM mono little-endian."""
    pcm = quantize_pcm16(w.samples).tobytes()
    header = b"RIFF" + struct.pack("<I", 36 + len(pcm)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, _FORMAT_PCM, 1, w.sample_rate_hz,
                                    w.sample_rate_hz * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(pcm))
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(header + pcm)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# dataset directory
# ---------------------------------------------------------------------------


def condition_from_name(filename: str) -> Condition:
    name = filename.lower()
    if "anomaly" in name:
        return Condition.ANOMALOUS
    if "normal" in name:
        return Condition.NORMAL
    raise UnlabeledFile(f"{filename}: name contains neither 'normal' nor 'anomaly'")


def load_dataset(root) -> list[LabeledClip]:
    """Load every ``root/<machine_id>/{train,test}/*.wav`` in lexicographic path order."""
    root = Path(root)
    if not root.is_dir():
        raise EmptyDataset(f"dataset root {root} is not a directory")
    clips = []
    for path in sorted(root.rglob("*.wav"), key=lambda p: p.as_posix()):
        rel = path.relative_to(root).parts
        if len(rel) != 3 or rel[1] not in ("train", "test"):
            raise UnlabeledFile(f"{path}: expected <machine_id>/train|test/<file>.wav under {root}")
        try:
            condition = condition_from_name(path.name)
        except UnlabeledFile as exc:
            raise UnlabeledFile(f"{path}: name contains neither 'normal' nor 'anomaly'") from exc
        clips.append(LabeledClip(read_wav(path), rel[0], condition, str(path), rel[1]))
    if not clips:
        raise EmptyDataset(f"no .wav files under {root}")
    return clips


# ---------------------------------------------------------------------------
# synthesis
# ---------------------------------------------------------------------------


class InjectionKind(str, enum.Enum):
    TONE_BURST = "tone_burst"
    NOISE_BURST = "noise_burst"
    HARMONIC_SHIFT = "harmonic_shift"


@dataclass(frozen=True)
class MachineProfile:
    """Parameters of a synthetic machine.

    ``noise_level`` is the RMS of the band-limited noise relative to the RMS
    of the harmonic stack. ``cycle_hz`` adds a sawtooth amplitude envelope
    (slow rise, abrupt drop) so the sound is not time-symmetric.
    """

    name: str
    fundamental_hz: float
    harmonic_count: int
    harmonic_decay: float
    noise_band: tuple = (50.0, 7950.0)
    noise_level: float = 0.005
    duration_s: float = 2.1
    cycle_hz: float = 3.0
    cycle_depth: float = 0.7

    def validate(self, sample_rate_hz: int = DEFAULT_SAMPLE_RATE) -> None:
        nyquist = sample_rate_hz / 2
        problems = []
        if not self.name:
            problems.append("empty name")
        if not self.fundamental_hz > 0:
            problems.append("fundamental_hz must be > 0")
        if self.harmonic_count < 1:
            problems.append("harmonic_count must be >= 1")
        elif self.fundamental_hz * self.harmonic_count >= nyquist:
            problems.append("highest harmonic reaches Nyquist")
        if not 0 < self.harmonic_decay <= 1:
            problems.append("harmonic_decay must be in (0, 1]")
        low, high = self.noise_band
        if not 0 <= low < high <= nyquist:
            problems.append(f"noise_band {self.noise_band} outside [0, {nyquist}]")
        if self.noise_level < 0:
            problems.append("noise_level must be >= 0")
        if not self.duration_s > 0:
            problems.append("duration_s must be > 0")
        if self.cycle_hz < 0 or not 0 <= self.cycle_depth <= 1:
            problems.append("cycle_hz must be >= 0 and cycle_depth in [0, 1]")
        if problems:
            raise InvalidProfile(f"profile {self.name!r}: " + "; ".join(problems))


@dataclass(frozen=True)
class AnomalySpec:
    target_band_index: int
    injection_kind: InjectionKind = InjectionKind.TONE_BURST
    snr_db: float = 0.0

    def __post_init__(self):
        if not 0 <= self.target_band_index < N_BANDS:
            raise InvalidProfile(f"target_band_index {self.target_band_index} not in [0, {N_BANDS - 1}]")
        object.__setattr__(self, "injection_kind", InjectionKind(self.injection_kind))

    @property
    def band_hz(self) -> tuple:
        lo = self.target_band_index * BAND_WIDTH_HZ
        return lo, lo + BAND_WIDTH_HZ


def bandpass_fft(x: np.ndarray, low_hz: float, high_hz: float, fs: int) -> np.ndarray:
    """Brick-wall filter keeping DFT bins with frequency in [low_hz, high_hz)."""
    spec = np.fft.rfft(x)
    freqs = np.fft.rfftfreq(len(x), 1.0 / fs)
    keep = (freqs >= low_hz) & (freqs < high_hz)
    if high_hz >= fs / 2:
        keep |= freqs == fs / 2
    spec[~keep] = 0.0
    return np.fft.irfft(spec, n=len(x))


def band_energy(x: np.ndarray, low_hz: float, high_hz: float, fs: int) -> float:
    """Energy of ``x`` in [low_hz, high_hz) via one-sided Parseval."""
    spec = np.abs(np.fft.rfft(x)) ** 2
    freqs = np.fft.rfftfreq(len(x), 1.0 / fs)
    weight = np.full(len(freqs), 2.0)
    weight[0] = 1.0
    if len(x) % 2 == 0:
        weight[-1] = 1.0
    keep = (freqs >= low_hz) & (freqs < high_hz)
    if high_hz >= fs / 2:
        keep |= freqs == fs / 2
    return float(np.sum(spec[keep] * weight[keep]) / len(x))


def _rms(x) -> float:
    return float(np.sqrt(np.mean(np.square(x))))


def _burst_envelope(n: int, rng: np.random.Generator) -> np.ndarray:
    """Tukey-shaped burst covering 40-70% of the clip at a random offset."""
    length = int(n * rng.uniform(0.4, 0.7))
    start = int(rng.integers(0, n - length + 1))
    taper = max(1, length // 8)
    env = np.zeros(n)
    env[start:start + length] = 1.0
    ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(taper) / taper)
    env[start:start + taper] = ramp
    env[start + length - taper:start + length] = ramp[::-1]
    return env


def normal_signal(profile: MachineProfile, n: int, fs: int, rng: np.random.Generator) -> np.ndarray:
    t = np.arange(n) / fs
    harmonics = np.zeros(n)
    for h in range(1, profile.harmonic_count + 1):
        phase = rng.uniform(0, 2 * np.pi)
        harmonics += profile.harmonic_decay ** (h - 1) * np.sin(2 * np.pi * h * profile.fundamental_hz * t + phase)
    if profile.cycle_hz > 0:
        ramp = np.mod(profile.cycle_hz * t + rng.uniform(0, 1), 1.0)
        harmonics *= (1.0 - profile.cycle_depth) + profile.cycle_depth * ramp
    noise = bandpass_fft(rng.standard_normal(n), *profile.noise_band, fs)
    noise_rms = _rms(noise)
    if noise_rms > 0:
        noise *= profile.noise_level * _rms(harmonics) / noise_rms
    return harmonics + noise


def anomaly_component(profile: MachineProfile, anomaly: AnomalySpec, normal: np.ndarray,
                      fs: int, rng: np.random.Generator) -> np.ndarray:
    """Signal added to ``normal`` for ``anomaly``; its energy sits in the target band."""
    n = len(normal)
    t = np.arange(n) / fs
    lo, hi = anomaly.band_hz
    margin = 0.1 * BAND_WIDTH_HZ
    inner_lo, inner_hi = lo + margin, hi - margin
    env = _burst_envelope(n, rng)
    kind = anomaly.injection_kind
    if kind is InjectionKind.TONE_BURST:
        freq = rng.uniform(lo + 0.25 * BAND_WIDTH_HZ, hi - 0.25 * BAND_WIDTH_HZ)
        comp = np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    elif kind is InjectionKind.NOISE_BURST:
        comp = bandpass_fft(rng.standard_normal(n), inner_lo, inner_hi, fs)
    else:
        shifted = profile.fundamental_hz * rng.uniform(1.03, 1.10)
        first = max(1, int(np.ceil(inner_lo / shifted)))
        last = max(first, int(np.floor(inner_hi / shifted)))
        comp = np.zeros(n)
        for i, h in enumerate(range(first, last + 1)):
            freq = h * shifted
            if freq >= inner_hi:
                freq = 0.5 * (inner_lo + inner_hi)
            comp += 0.8 ** i * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    comp *= env
    target_rms = np.sqrt(band_energy(normal, lo, hi, fs) / n) * 10.0 ** (anomaly.snr_db / 20.0)
    comp_rms = _rms(comp)
    return comp * (target_rms / comp_rms) if comp_rms > 0 else comp


def synth_clip(profile: MachineProfile, anomaly: Optional[AnomalySpec], seed: int,
               sample_rate_hz: int = DEFAULT_SAMPLE_RATE, split: str = "test") -> LabeledClip:
    """Deterministic synthetic clip of ``profile``, optionally with an injected anomaly.

    The anomaly RMS is ``snr_db`` relative to the normal clip's RMS inside the
    target 1600 Hz band. The result is peak-normalised to 0.9.
    """
    profile.validate(sample_rate_hz)
    n = int(round(profile.duration_s * sample_rate_hz))
    if n < 1:
        raise InvalidProfile(f"profile {profile.name!r}: duration yields no samples")
    rng = make_rng(seed, "synth", profile.name)
    x = normal_signal(profile, n, sample_rate_hz, rng)
    if anomaly is not None:
        x = x + anomaly_component(profile, anomaly, x, sample_rate_hz, rng)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = x * (0.9 / peak)
    condition = Condition.NORMAL if anomaly is None else Condition.ANOMALOUS
    return LabeledClip(Waveform(x, sample_rate_hz), profile.name, condition,
                       f"synth:{profile.name}:{seed}", split)


DEFAULT_PROFILES = (
    MachineProfile("fan", fundamental_hz=150.0, harmonic_count=50, harmonic_decay=0.96, cycle_hz=3.0),
    MachineProfile("pump", fundamental_hz=230.0, harmonic_count=34, harmonic_decay=0.94, cycle_hz=5.0),
    MachineProfile("valve", fundamental_hz=95.0, harmonic_count=80, harmonic_decay=0.97, cycle_hz=2.0),
)
