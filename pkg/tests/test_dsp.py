import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandfaith.audio_io import Waveform
from bandfaith.dsp import (
    BANDS,
    NormStats,
    Spectrogram,
    StftConfig,
    band_bin_ranges,
    band_to_bins,
    fit_norm_stats,
    grid_from_csv,
    grid_to_csv,
    mask_band,
    mask_grid,
    normalize_input,
    spectrogram_from_bytes,
    spectrogram_to_bytes,
    stft_magnitude,
)
from bandfaith.errors import SignalTooShort, StatsShapeMismatch, UnsupportedSampleRate
from oracles import band_of_frequency, naive_dft_magnitude

# bin-centre rule at N=1024, fs=16 kHz, frozen from the oracle in TestBands
FROZEN_BAND_BINS = [(0, 102), (103, 204), (205, 307), (308, 409), (410, 512)]


def _tone(freq_hz: float, n: int = 4096) -> Waveform:
    return Waveform(0.5 * np.sin(2 * np.pi * freq_hz * np.arange(n) / 16000))


class TestStft:
    def test_frame_count(self):
        s = stft_magnitude(Waveform(np.zeros(33600)))
        assert s.mag.shape == ((33600 - 1024) // 512 + 1, 513) == (64, 513)

    def test_exact_length_single_frame(self):
        assert stft_magnitude(Waveform(np.zeros(1024))).n_frames == 1

    def test_too_short(self):
        with pytest.raises(SignalTooShort):
            stft_magnitude(Waveform(np.zeros(1023)))

    def test_matches_naive_dft(self, rng):
        for _ in range(5):
            x = rng.uniform(-1, 1, int(rng.integers(1024, 3000)))
            ref = naive_dft_magnitude(x)
            got = stft_magnitude(Waveform(x)).mag
            np.testing.assert_allclose(got, ref, rtol=1e-9, atol=1e-9 * ref.max())

    def test_1khz_peaks_at_bin_64(self):
        s = stft_magnitude(_tone(1000.0))
        assert set(np.argmax(s.mag, axis=1)) == {64}

    def test_hamming_symmetric(self):
        w = StftConfig().window
        np.testing.assert_allclose(w, w[::-1])
        assert w[0] == pytest.approx(0.08)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            StftConfig(1000, 500)
        with pytest.raises(ValueError):
            StftConfig(1024, 0)


class TestBands:
    def test_frozen_ranges(self):
        got = [(r.start, r.stop - 1) for r in band_bin_ranges()]
        assert got == FROZEN_BAND_BINS

    def test_matches_bin_centre_oracle(self):
        for k in range(513):
            band = band_of_frequency(k * 16000 / 1024)
            assert k in band_bin_ranges()[band]

    def test_partition(self):
        bins = [k for r in band_bin_ranges() for k in r]
        assert bins == list(range(513))

    @pytest.mark.parametrize("n", [256, 512, 2048])
    def test_partition_other_sizes(self, n):
        cfg = StftConfig(n, n // 2)
        bins = [k for r in band_bin_ranges(cfg) for k in r]
        assert bins == list(range(n // 2 + 1))

    def test_nyquist_in_last_band(self):
        assert 512 in band_to_bins(BANDS[4])

    def test_other_rate_rejected(self):
        with pytest.raises(UnsupportedSampleRate):
            band_to_bins(BANDS[0], StftConfig(), 22050)

    def test_labels(self):
        assert BANDS[2].label == "3200-4800Hz"


class TestMasking:
    def test_zeroes_only_band(self, rng):
        grid = rng.uniform(0.1, 1, (10, 513))
        r = band_bin_ranges()[2]
        out = mask_grid(grid, r)
        assert np.all(out[:, r.start:r.stop] == 0.0)
        keep = np.ones(513, bool)
        keep[r.start:r.stop] = False
        assert out[:, keep].tobytes() == grid[:, keep].tobytes()

    def test_input_untouched(self, rng):
        grid = rng.uniform(size=(4, 513))
        before = grid.copy()
        mask_grid(grid, band_bin_ranges()[0])
        np.testing.assert_array_equal(grid, before)

    def test_idempotent(self, rng):
        s = Spectrogram(rng.uniform(size=(6, 513)), 16000)
        once = mask_band(s, BANDS[3])
        twice = mask_band(once, BANDS[3])
        assert once.mag.tobytes() == twice.mag.tobytes()

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 4), st.integers(0, 4))
    def test_masks_commute(self, a, b):
        grid = np.arange(2 * 513, dtype=float).reshape(2, 513) + 1
        ranges = band_bin_ranges()
        ab = mask_grid(mask_grid(grid, ranges[a]), ranges[b])
        ba = mask_grid(mask_grid(grid, ranges[b]), ranges[a])
        np.testing.assert_array_equal(ab, ba)


class TestNormalization:
    def test_standardises(self, rng):
        specs = [Spectrogram(rng.uniform(0, 3, (20, 513)), 16000) for _ in range(3)]
        stats = fit_norm_stats(specs)
        z = np.concatenate([normalize_input(s, stats) for s in specs])
        np.testing.assert_allclose(z.mean(axis=0), 0, atol=1e-12)
        np.testing.assert_allclose(z.std(axis=0), 1, atol=1e-12)

    def test_std_floor(self):
        stats = NormStats(np.zeros(3), np.zeros(3))
        np.testing.assert_array_equal(stats.std, [1e-6] * 3)
        assert np.all(np.isfinite(normalize_input(np.ones((2, 3)), stats)))

    def test_shape_mismatch(self):
        with pytest.raises(StatsShapeMismatch):
            normalize_input(np.ones((2, 4)), NormStats(np.zeros(3), np.ones(3)))

    def test_mask_after_normalisation_is_zero(self, rng):
        stats = NormStats(rng.uniform(1, 2, 513), rng.uniform(1, 2, 513))
        z = mask_grid(normalize_input(rng.uniform(size=(3, 513)), stats), band_bin_ranges()[1])
        assert np.all(z[:, 103:205] == 0.0)


class TestSerialisation:
    def test_binary_round_trip(self, rng):
        s = Spectrogram(rng.uniform(size=(7, 513)).astype(np.float32).astype(np.float64), 16000)
        blob = spectrogram_to_bytes(s)
        assert len(blob) == 16 + 4 * 7 * 513
        back = spectrogram_from_bytes(blob)
        np.testing.assert_array_equal(back.mag, s.mag)
        assert back.config.fft_size == 1024

    def test_binary_truncated(self, rng):
        blob = spectrogram_to_bytes(Spectrogram(rng.uniform(size=(2, 513)), 16000))
        with pytest.raises(ValueError):
            spectrogram_from_bytes(blob[:-4])

    def test_csv_round_trip_exact(self, rng):
        grid = rng.standard_normal((5, 9))
        text = grid_to_csv(grid)
        assert len(text.splitlines()) == 5
        np.testing.assert_array_equal(grid_from_csv(text), grid)
