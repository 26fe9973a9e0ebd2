"""Desk-scale convolutional anomaly scorer.

Architecture: three blocks of [conv 3x3 -> relu -> maxpool 2x2], global average
pooling, a dense layer to a 64-d L2-normalised embedding. During training a
linear head classifies ``(machine_id, augmentation)``; at inference the head is
unused and the anomaly score is ``1 - cos(embedding, centroid[machine_id])``.
"""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .audio_io import LabeledClip
from .autodiff import Tape
from .dsp import (
    BANDS,
    NormStats,
    Spectrogram,
    StftConfig,
    band_to_bins,
    fit_norm_stats,
    mask_grid,
    normalize_input,
    stft_magnitude,
)
from .errors import (
    CheckpointError,
    InsufficientMachines,
    LayerNotFound,
    NonFiniteLoss,
    ShapeMismatch,
    UnknownMachine,
)
from .rng import make_rng

logger = logging.getLogger(__name__)

AUGMENTATIONS = ("identity", "band5_mask", "time_reverse", "gain")
GAIN_FACTOR = 10.0 ** (6.0 / 20.0)
CHECKPOINT_MAGIC = b"FBND1"


@dataclass(frozen=True)
class ModelConfig:
    channels: tuple = (8, 16, 16)
    first_stride: int = 2
    embedding_dim: int = 64
    t_in: int = 64
    n_bins: int = 513


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 10
    batch_size: int = 32
    learning_rate: float = 5e-3
    seed: int = 0
    augmentation: bool = True
    masked_band: Optional[int] = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or not self.learning_rate > 0 or self.seed < 0:
            raise ValueError(f"epochs, batch_size, learning_rate must be positive and seed >= 0: {self}")
        if self.masked_band is not None and not 0 <= self.masked_band < len(BANDS):
            raise ValueError(f"masked_band must be in [0, {len(BANDS) - 1}] or None")


@dataclass
class ScorerModel:
    config: ModelConfig
    params: dict
    centroids: dict
    norm_stats: NormStats
    class_names: list
    stft: StftConfig = field(default_factory=StftConfig)
    sample_rate_hz: int = 16000
    masked_band: Optional[int] = None
    loss_history: list = field(default_factory=list)

    @property
    def machine_ids(self) -> list:
        return sorted(self.centroids)

    @property
    def input_shape(self) -> tuple:
        return (self.config.t_in, self.config.n_bins)


# ---------------------------------------------------------------------------
# parameters and forward graph
# ---------------------------------------------------------------------------


def param_names(cfg: ModelConfig) -> list:
    names = []
    for i in range(len(cfg.channels)):
        names += [f"conv{i}.w", f"conv{i}.b"]
    return names + ["embed.w", "embed.b", "head.w", "head.b"]


def init_params(cfg: ModelConfig, n_classes: int, seed: int) -> dict:
    rng = make_rng(seed, "init")
    params = {}
    c_in = 1
    for i, c_out in enumerate(cfg.channels):
        fan_in = c_in * 9
        params[f"conv{i}.w"] = rng.standard_normal((c_out, c_in, 3, 3)) * np.sqrt(2.0 / fan_in)
        params[f"conv{i}.b"] = np.zeros(c_out)
        c_in = c_out
    params["embed.w"] = rng.standard_normal((c_in, cfg.embedding_dim)) * np.sqrt(1.0 / c_in)
    params["embed.b"] = np.zeros(cfg.embedding_dim)
    params["head.w"] = rng.standard_normal((cfg.embedding_dim, n_classes)) * np.sqrt(1.0 / cfg.embedding_dim)
    params["head.b"] = np.zeros(n_classes)
    return params


def forward(tape: Tape, params: dict, x, cfg: ModelConfig, with_head=False,
            input_requires_grad=False) -> dict:
    """Record the encoder on ``tape`` for a batch ``x`` of shape (N, T, F).

    Returns named nodes: ``input``, ``last_conv`` (post-relu activations of the
    final conv layer), ``embedding`` and, if requested, ``logits``. Parameter
    leaves are named as in :func:`param_names`.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[1:] != (cfg.t_in, cfg.n_bins):
        raise ShapeMismatch(f"expected (N, {cfg.t_in}, {cfg.n_bins}), got {x.shape}")
    leaf = tape.leaf if input_requires_grad else tape.constant
    inp = leaf(x[:, None, :, :], name="input")
    p = {name: tape.leaf(params[name], name=name) for name in param_names(cfg)
         if with_head or not name.startswith("head.")}
    h = inp
    last_conv = None
    for i in range(len(cfg.channels)):
        stride = cfg.first_stride if i == 0 else 1
        last_conv = tape.relu(tape.conv2d(h, p[f"conv{i}.w"], p[f"conv{i}.b"], stride=stride, padding=1))
        h = tape.maxpool2x2(last_conv)
    emb = tape.l2_normalize(tape.dense(tape.global_avg_pool(h), p["embed.w"], p["embed.b"]))
    nodes = {"input": inp, "last_conv": last_conv, "embedding": emb}
    if with_head:
        nodes["logits"] = tape.dense(emb, p["head.w"], p["head.b"])
    return nodes


def score_graph(tape: Tape, emb, centroid: np.ndarray):
    """Per-row ``1 - <emb, centroid>``; sums over the batch when N > 1."""
    neg_c = tape.constant(-centroid[None, :])
    cos_terms = tape.reduce_sum(tape.mul(emb, neg_c), axis=1)
    one = tape.constant(np.ones(emb.shape[0]))
    return tape.add(cos_terms, one)


def embed_grids(model: ScorerModel, grids) -> np.ndarray:
    """Embeddings for prepared (N, T_in, F) grids."""
    tape = Tape()
    return forward(tape, model.params, grids, model.config)["embedding"].value


# ---------------------------------------------------------------------------
# input preparation
# ---------------------------------------------------------------------------


def crop_or_tile(grid: np.ndarray, t_in: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Fixed-length (t_in, F) view of ``grid``.

    Inputs shorter than ``t_in`` are tiled cyclically. Longer ones get a
    random crop when ``rng`` is given (training) and a centre crop otherwise.
    """
    grid = np.asarray(grid, dtype=np.float64)
    t = grid.shape[0]
    if t == 0:
        raise ShapeMismatch("cannot crop an empty grid")
    if t <= t_in:
        return grid[np.arange(t_in) % t]
    start = int(rng.integers(0, t - t_in + 1)) if rng is not None else (t - t_in) // 2
    return grid[start:start + t_in].copy()


def _mask_index(grid: np.ndarray, band_index: int, model_or_stft, fs: int) -> np.ndarray:
    return mask_grid(grid, band_to_bins(BANDS[band_index], model_or_stft, fs))


def prepare_input(model: ScorerModel, s: Spectrogram) -> np.ndarray:
    """Normalise, apply the model's ablation mask if any, centre crop."""
    if s.mag.shape[1] != model.config.n_bins:
        raise ShapeMismatch(f"spectrogram has {s.mag.shape[1]} bins, model expects {model.config.n_bins}")
    x = normalize_input(s, model.norm_stats)
    if model.masked_band is not None:
        x = _mask_index(x, model.masked_band, model.stft, model.sample_rate_hz)
    return crop_or_tile(x, model.config.t_in)


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


def _centroid(model: ScorerModel, machine_id: str) -> np.ndarray:
    try:
        return model.centroids[machine_id]
    except KeyError:
        raise UnknownMachine(f"no centroid for machine {machine_id!r}; known: {model.machine_ids}") from None


def scores_for_grids(model: ScorerModel, grids, machine_id: str) -> np.ndarray:
    """Anomaly scores for prepared grids (N, T_in, F), computed as one batch."""
    c = _centroid(model, machine_id)
    emb = embed_grids(model, grids)
    return 1.0 - emb @ c


class ScoreFunction:
    """Differentiable ``grid -> anomaly score`` for one machine.

    Operates on already normalised and cropped (T_in, F) grids. Every call
    records a fresh tape, so instances are safe to share across threads.
    """

    def __init__(self, model: ScorerModel, machine_id: str):
        self.model = model
        self.machine_id = machine_id
        self.centroid = _centroid(model, machine_id)

    @property
    def input_shape(self) -> tuple:
        return self.model.input_shape

    def _run(self, x, requires_grad):
        tape = Tape()
        nodes = forward(tape, self.model.params, np.asarray(x)[None], self.model.config,
                        input_requires_grad=requires_grad)
        out = score_graph(tape, nodes["embedding"], self.centroid)
        return tape, nodes, out

    def __call__(self, x) -> float:
        _, _, out = self._run(x, False)
        return float(out.value[0])

    def value_and_grad(self, x):
        tape, nodes, out = self._run(x, True)
        tape.backward(tape.reduce_sum(out))
        return float(out.value[0]), nodes["input"].grad[0, 0]

    def gradient(self, x) -> np.ndarray:
        return self.value_and_grad(x)[1]

    def gradients(self, xs) -> np.ndarray:
        """Input gradients for a stack (N, T_in, F) evaluated as one batch."""
        tape = Tape()
        nodes = forward(tape, self.model.params, xs, self.model.config, input_requires_grad=True)
        tape.backward(tape.reduce_sum(score_graph(tape, nodes["embedding"], self.centroid)))
        return nodes["input"].grad[:, 0]

    def layer_activations(self, x, layer="last_conv"):
        """Score, activations (C, h, w) and d score / d activations of ``layer``."""
        tape, nodes, out = self._run(x, False)
        if layer not in nodes or nodes[layer].value.ndim != 4:
            raise LayerNotFound(f"no convolutional layer named {layer!r}")
        tape.backward(tape.reduce_sum(out))
        node = nodes[layer]
        grad = node.grad if node.grad is not None else np.zeros_like(node.value)
        return float(out.value[0]), node.value[0], grad[0]


def score_fn_handle(model: ScorerModel, machine_id: str) -> ScoreFunction:
    return ScoreFunction(model, machine_id)


def anomaly_score(model: ScorerModel, s: Spectrogram, machine_id: str) -> float:
    """``1 - cos(embedding, centroid)`` in [0, 2] on the centre crop of ``s``."""
    return ScoreFunction(model, machine_id)(prepare_input(model, s))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


class Adam:
    def __init__(self, params: dict, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            params[k] = params[k] - self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def augment(mag: np.ndarray, aug: str, stats: NormStats, t_in: int, rng, stft: StftConfig,
            fs: int, masked_band: Optional[int] = None) -> np.ndarray:
    """Training view of one raw magnitude grid under augmentation ``aug``."""
    if aug == "gain":
        mag = mag * (GAIN_FACTOR if rng.random() < 0.5 else 1.0 / GAIN_FACTOR)
    x = crop_or_tile(normalize_input(mag, stats), t_in, rng)
    if aug == "time_reverse":
        x = x[::-1].copy()
    elif aug == "band5_mask":
        x = _mask_index(x, len(BANDS) - 1, stft, fs)
    if masked_band is not None:
        x = _mask_index(x, masked_band, stft, fs)
    return x


def clip_spectrograms(clips: Sequence[LabeledClip], stft: StftConfig = StftConfig()) -> list:
    return [stft_magnitude(c.waveform, stft) for c in clips]


def train(clips: Sequence[LabeledClip], cfg: TrainConfig = TrainConfig(),
          model_cfg: Optional[ModelConfig] = None, stft: StftConfig = StftConfig(),
          spectrograms: Optional[Sequence[Spectrogram]] = None) -> ScorerModel:
    """Fit the encoder on normal clips and compute one centroid per machine.

    ``spectrograms`` may be passed to reuse precomputed STFTs of ``clips``.
    """
    if any(c.is_anomalous for c in clips):
        raise ValueError("train() accepts normal clips only")
    machines = sorted({c.machine_id for c in clips})
    augs = AUGMENTATIONS if cfg.augmentation else ("identity",)
    if len(machines) * len(augs) < 2 or (len(machines) < 2 and not cfg.augmentation):
        raise InsufficientMachines(
            f"need at least 2 machine ids without augmentation, got {machines}")
    specs = list(spectrograms) if spectrograms is not None else clip_spectrograms(clips, stft)
    fs = specs[0].sample_rate_hz
    model_cfg = model_cfg or ModelConfig(n_bins=stft.fft_size // 2 + 1)
    stats = fit_norm_stats(specs)
    class_names = [f"{m}/{a}" for m in machines for a in augs]
    params = init_params(model_cfg, len(class_names), cfg.seed)
    opt = Adam(params, cfg.learning_rate)
    machine_idx = [machines.index(c.machine_id) for c in clips]

    history = []
    for epoch in range(cfg.epochs):
        rng = make_rng(cfg.seed, "train", epoch)
        order = rng.permutation(len(clips))
        losses = []
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            xs, labels = [], []
            for i in batch:
                a = int(rng.integers(len(augs)))
                xs.append(augment(specs[i].mag, augs[a], stats, model_cfg.t_in, rng, stft, fs, cfg.masked_band))
                labels.append(machine_idx[i] * len(augs) + a)
            tape = Tape()
            nodes = forward(tape, params, np.stack(xs), model_cfg, with_head=True)
            loss = tape.softmax_cross_entropy(nodes["logits"], labels)
            if not np.isfinite(loss.value):
                raise NonFiniteLoss(f"loss became {float(loss.value)} at epoch {epoch}")
            grads = tape.backward(loss)
            opt.step(params, grads)
            losses.append(float(loss.value) * len(batch))
        history.append(sum(losses) / len(order))
        logger.info("epoch %d/%d loss %.4f", epoch + 1, cfg.epochs, history[-1])
    for name, value in params.items():
        if not np.all(np.isfinite(value)):
            raise NonFiniteLoss(f"parameter {name} became non-finite")

    model = ScorerModel(model_cfg, params, {}, stats, class_names, stft, fs, cfg.masked_band, history)
    model.centroids = compute_centroids(model, clips, specs)
    return model


def compute_centroids(model: ScorerModel, clips, specs, batch_size=32) -> dict:
    grids = [prepare_input(model, s) for s in specs]
    emb = np.concatenate([embed_grids(model, grids[i:i + batch_size])
                          for i in range(0, len(grids), batch_size)])
    centroids = {}
    for m in sorted({c.machine_id for c in clips}):
        rows = [i for i, c in enumerate(clips) if c.machine_id == m]
        mean = emb[rows].mean(axis=0)
        centroids[m] = mean / np.linalg.norm(mean)
    return centroids


def auxiliary_accuracy(model: ScorerModel, clips: Sequence[LabeledClip], seed: int = 0,
                       spectrograms=None) -> float:
    """Accuracy of the training head on every (clip, augmentation) pair."""
    specs = spectrograms if spectrograms is not None else clip_spectrograms(clips, model.stft)
    augs = [n.split("/", 1)[1] for n in model.class_names]
    augs = list(dict.fromkeys(augs))
    machines = list(dict.fromkeys(n.split("/", 1)[0] for n in model.class_names))
    xs, labels = [], []
    for i, (clip, s) in enumerate(zip(clips, specs)):
        rng = make_rng(seed, "accuracy", i)
        for a, aug in enumerate(augs):
            xs.append(augment(s.mag, aug, model.norm_stats, model.config.t_in, rng, model.stft,
                              model.sample_rate_hz, model.masked_band))
            labels.append(machines.index(clip.machine_id) * len(augs) + a)
    correct = 0
    for start in range(0, len(xs), 64):
        tape = Tape()
        logits = forward(tape, model.params, np.stack(xs[start:start + 64]), model.config, with_head=True)["logits"]
        correct += int(np.sum(np.argmax(logits.value, axis=1) == np.array(labels[start:start + 64])))
    return correct / len(xs)


# ---------------------------------------------------------------------------
# checkpoint
# ---------------------------------------------------------------------------


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<H", len(b)) + b


def save_checkpoint(model: ScorerModel, path, run_config: Optional[dict] = None) -> None:
    """Binary checkpoint: magic, JSON metadata, parameters, centroids, norm stats.

    All integers are little-endian u32 unless noted, arrays are f64 LE.
    ``run_config`` is stored verbatim in the metadata for provenance.
    """
    meta = {
        "model_config": asdict(model.config),
        "class_names": model.class_names,
        "stft": asdict(model.stft),
        "sample_rate_hz": model.sample_rate_hz,
        "masked_band": model.masked_band,
        "loss_history": model.loss_history,
    }
    if run_config is not None:
        meta["run_config"] = run_config
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    out = bytearray(CHECKPOINT_MAGIC)
    out += struct.pack("<I", len(meta_bytes)) + meta_bytes
    names = param_names(model.config)
    out += struct.pack("<I", len(names))
    for name in names:
        arr = np.ascontiguousarray(model.params[name], dtype="<f8")
        out += _pack_str(name) + struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += arr.tobytes()
    out += struct.pack("<I", len(model.centroids))
    for m in model.machine_ids:
        c = np.ascontiguousarray(model.centroids[m], dtype="<f8")
        out += _pack_str(m) + struct.pack("<I", c.size) + c.tobytes()
    f = model.norm_stats.mean.size
    out += struct.pack("<I", f)
    out += np.ascontiguousarray(model.norm_stats.mean, dtype="<f8").tobytes()
    out += np.ascontiguousarray(model.norm_stats.std, dtype="<f8").tobytes()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, blob: bytes):
        self.blob, self.pos = blob, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise CheckpointError("checkpoint truncated")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<H")
        return self.take(n).decode("utf-8")

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * count), dtype="<f8").astype(np.float64)


def load_checkpoint(path) -> ScorerModel:
    r = _Reader(Path(path).read_bytes())
    if r.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a FBND1 checkpoint")
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
        mc = meta["model_config"]
        cfg = ModelConfig(tuple(mc["channels"]), mc["first_stride"], mc["embedding_dim"], mc["t_in"], mc["n_bins"])
        missing = [k for k in ("class_names", "stft", "sample_rate_hz", "masked_band", "loss_history")
                   if k not in meta]
        if missing:
            raise KeyError(", ".join(missing))
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: unreadable metadata ({exc})") from exc
    params = {}
    (n_params,) = r.unpack("<I")
    for _ in range(n_params):
        name = r.string()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        params[name] = r.f64(int(np.prod(shape))).reshape(shape)
    if sorted(params) != sorted(param_names(cfg)):
        raise CheckpointError(f"{path}: parameter set does not match architecture")
    centroids = {}
    (n_machines,) = r.unpack("<I")
    for _ in range(n_machines):
        m = r.string()
        (size,) = r.unpack("<I")
        centroids[m] = r.f64(size)
    (f,) = r.unpack("<I")
    stats = NormStats(r.f64(f), r.f64(f))
    if r.pos != len(r.blob):
        raise CheckpointError(f"{path}: {len(r.blob) - r.pos} trailing bytes")
    return ScorerModel(cfg, params, centroids, stats, meta["class_names"], StftConfig(**meta["stft"]),
                       meta["sample_rate_hz"], meta["masked_band"], meta["loss_history"])
