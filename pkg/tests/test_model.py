import numpy as np
import pytest

from bandfaith.audio_io import DEFAULT_PROFILES, AnomalySpec, Condition, synth_clip
from bandfaith.dsp import StftConfig, band_bin_ranges, stft_magnitude
from bandfaith.errors import (
    CheckpointError,
    InsufficientMachines,
    LayerNotFound,
    ShapeMismatch,
    UnknownMachine,
)
from bandfaith.model import (
    AUGMENTATIONS,
    ModelConfig,
    ScoreFunction,
    TrainConfig,
    anomaly_score,
    augment,
    crop_or_tile,
    embed_grids,
    load_checkpoint,
    prepare_input,
    save_checkpoint,
    score_fn_handle,
    train,
)
from bandfaith.rng import make_rng
from oracles import central_difference


class TestCropOrTile:
    def test_identity_at_t_in(self, rng):
        g = rng.standard_normal((64, 5))
        np.testing.assert_array_equal(crop_or_tile(g, 64), g)

    def test_tiles_half_length(self, rng):
        g = rng.standard_normal((32, 5))
        out = crop_or_tile(g, 64)
        np.testing.assert_array_equal(out[:32], g)
        np.testing.assert_array_equal(out[32:], g)

    def test_tiles_odd_length(self, rng):
        g = rng.standard_normal((5, 3))
        out = crop_or_tile(g, 12)
        np.testing.assert_array_equal(out, g[np.arange(12) % 5])

    def test_centre_crop(self):
        g = np.arange(100.0)[:, None]
        np.testing.assert_array_equal(crop_or_tile(g, 64)[:, 0], np.arange(18.0, 82.0))

    def test_seeded_random_crop(self):
        g = np.arange(300.0)[:, None]
        a = crop_or_tile(g, 64, make_rng(4, "crop"))
        b = crop_or_tile(g, 64, make_rng(4, "crop"))
        np.testing.assert_array_equal(a, b)


class TestTrainContract:
    def test_single_machine_without_augmentation(self):
        clips = [synth_clip(DEFAULT_PROFILES[0], None, i, split="train") for i in range(2)]
        with pytest.raises(InsufficientMachines):
            train(clips, TrainConfig(epochs=1, augmentation=False))

    def test_rejects_anomalies(self):
        clips = [synth_clip(DEFAULT_PROFILES[0], AnomalySpec(1), 0)]
        with pytest.raises(ValueError):
            train(clips, TrainConfig(epochs=1))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)
        with pytest.raises(ValueError):
            TrainConfig(masked_band=5)

    def test_deterministic(self):
        clips = [synth_clip(p, None, i, split="train") for p in DEFAULT_PROFILES[:2] for i in range(3)]
        cfg = TrainConfig(epochs=1, batch_size=4, seed=9)
        a, b = train(clips, cfg), train(clips, cfg)
        for k in a.params:
            assert a.params[k].tobytes() == b.params[k].tobytes()
        assert a.loss_history == b.loss_history

    def test_single_machine_with_augmentation_trains(self):
        clips = [synth_clip(DEFAULT_PROFILES[0], None, i, split="train") for i in range(4)]
        model = train(clips, TrainConfig(epochs=1))
        assert model.machine_ids == ["fan"]
        assert len(model.class_names) == len(AUGMENTATIONS)


class TestTrainedModel:
    def test_invariants(self, tiny_model):
        for c in tiny_model.centroids.values():
            assert np.linalg.norm(c) == pytest.approx(1.0, abs=1e-12)
        for v in tiny_model.params.values():
            assert np.all(np.isfinite(v))
        assert tiny_model.loss_history[-1] < tiny_model.loss_history[0]

    def test_embeddings_unit_norm(self, tiny_model, tiny_test_clips):
        grids = np.stack([prepare_input(tiny_model, stft_magnitude(c.waveform)) for c in tiny_test_clips])
        np.testing.assert_allclose(np.linalg.norm(embed_grids(tiny_model, grids), axis=1), 1.0, atol=1e-9)

    def test_score_range_and_handle(self, tiny_model, tiny_test_clips):
        for clip in tiny_test_clips:
            s = stft_magnitude(clip.waveform)
            score = anomaly_score(tiny_model, s, clip.machine_id)
            assert 0.0 <= score <= 2.0
            handle = score_fn_handle(tiny_model, clip.machine_id)
            x = prepare_input(tiny_model, s)
            assert handle(x) == score
            assert handle(x) == handle(x)

    def test_unknown_machine(self, tiny_model):
        with pytest.raises(UnknownMachine):
            ScoreFunction(tiny_model, "turbine")

    def test_centroid_input_scores_zero(self, tiny_model):
        f = ScoreFunction(tiny_model, "fan")
        x = np.zeros(tiny_model.input_shape)
        emb = embed_grids(tiny_model, x[None])[0]
        f.centroid = emb
        assert f(x) == pytest.approx(0.0, abs=1e-9)
        ortho = np.zeros_like(emb)
        ortho[np.argmin(np.abs(emb))] = 1.0
        ortho -= emb * (ortho @ emb)
        f.centroid = ortho / np.linalg.norm(ortho)
        assert f(x) == pytest.approx(1.0, abs=1e-9)

    def test_gradient_matches_finite_differences(self, tiny_model, tiny_test_clips):
        f = ScoreFunction(tiny_model, "pump")
        x = prepare_input(tiny_model, stft_magnitude(tiny_test_clips[-1].waveform))
        coords = make_rng(0, "coords").choice(x.size, 16, replace=False)
        fd = central_difference(f, x.copy(), coords, h=1e-5)
        g = f.gradient(x).reshape(-1)[coords]
        assert np.max(np.abs(fd - g)) / np.max(np.abs(g)) < 1e-4

    def test_directional_derivative(self, tiny_model, tiny_test_clips):
        f = ScoreFunction(tiny_model, "fan")
        x = prepare_input(tiny_model, stft_magnitude(tiny_test_clips[0].waveform))
        h = 1e-6
        fd = (f(x * (1 + h)) - f(x * (1 - h))) / (2 * h)
        assert float(np.sum(f.gradient(x) * x)) == pytest.approx(fd, rel=1e-4)

    def test_batched_gradients_match_single(self, tiny_model, tiny_test_clips):
        f = ScoreFunction(tiny_model, "fan")
        xs = np.stack([prepare_input(tiny_model, stft_magnitude(c.waveform)) for c in tiny_test_clips[:3]])
        batched = f.gradients(xs)
        for i in range(3):
            np.testing.assert_allclose(batched[i], f.gradient(xs[i]), rtol=1e-10, atol=1e-14)

    def test_zero_head_gives_zero_gradient(self, tiny_model):
        f = ScoreFunction(tiny_model, "fan")
        zeroed = type(tiny_model)(**{**vars(tiny_model)})
        zeroed.params = {**tiny_model.params, "embed.w": np.zeros_like(tiny_model.params["embed.w"])}
        g = ScoreFunction(zeroed, "fan").gradient(np.ones(tiny_model.input_shape))
        assert np.all(g == 0.0)
        assert f.gradient(np.ones(tiny_model.input_shape)).any()

    def test_layer_activations(self, tiny_model):
        f = ScoreFunction(tiny_model, "fan")
        score, acts, grads = f.layer_activations(np.ones(tiny_model.input_shape))
        assert acts.shape == grads.shape and acts.ndim == 3
        assert acts.shape[0] == tiny_model.config.channels[-1]
        assert np.all(acts >= 0)
        with pytest.raises(LayerNotFound):
            f.layer_activations(np.ones(tiny_model.input_shape), "conv9")

    def test_shape_mismatch(self, tiny_model):
        with pytest.raises(ShapeMismatch):
            ScoreFunction(tiny_model, "fan")(np.ones((10, 513)))


class TestAugment:
    def test_band5_mask(self, tiny_model, rng):
        mag = rng.uniform(size=(70, 513))
        x = augment(mag, "band5_mask", tiny_model.norm_stats, 64, make_rng(0), StftConfig(), 16000)
        r = band_bin_ranges()[4]
        assert np.all(x[:, r.start:r.stop] == 0.0)

    def test_time_reverse(self, tiny_model, rng):
        mag = rng.uniform(size=(64, 513))
        fwd = augment(mag, "identity", tiny_model.norm_stats, 64, make_rng(0), StftConfig(), 16000)
        rev = augment(mag, "time_reverse", tiny_model.norm_stats, 64, make_rng(0), StftConfig(), 16000)
        np.testing.assert_array_equal(rev, fwd[::-1])

    def test_ablation_mask_applied(self, tiny_model, rng):
        mag = rng.uniform(size=(64, 513))
        x = augment(mag, "gain", tiny_model.norm_stats, 64, make_rng(0), StftConfig(), 16000, masked_band=1)
        assert np.all(x[:, 103:205] == 0.0)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tiny_model, tmp_path):
        path = tmp_path / "m.ckpt"
        save_checkpoint(tiny_model, path, {"note": "x"})
        back = load_checkpoint(path)
        for k, v in tiny_model.params.items():
            assert back.params[k].tobytes() == v.tobytes()
        for m, c in tiny_model.centroids.items():
            assert back.centroids[m].tobytes() == c.tobytes()
        assert back.norm_stats.mean.tobytes() == tiny_model.norm_stats.mean.tobytes()
        assert back.class_names == tiny_model.class_names
        assert back.config == tiny_model.config
        save_checkpoint(back, tmp_path / "again.ckpt", {"note": "x"})
        assert (tmp_path / "again.ckpt").read_bytes() == path.read_bytes()

    def test_bad_magic(self, tmp_path):
        (tmp_path / "x.ckpt").write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "x.ckpt")

    def test_truncated(self, tiny_model, tmp_path):
        save_checkpoint(tiny_model, tmp_path / "m.ckpt")
        blob = (tmp_path / "m.ckpt").read_bytes()
        (tmp_path / "t.ckpt").write_bytes(blob[:-10])
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "t.ckpt")

    def test_trailing_bytes(self, tiny_model, tmp_path):
        save_checkpoint(tiny_model, tmp_path / "m.ckpt")
        (tmp_path / "t.ckpt").write_bytes((tmp_path / "m.ckpt").read_bytes() + b"\x00")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "t.ckpt")
