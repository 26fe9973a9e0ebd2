"""Command-line pipeline: synth -> train -> explain -> ablate -> faithfulness.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Every run resolves one effective configuration (defaults, then ``--config``
JSON, then flags) and writes it next to, or inside, each output.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import logging
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .audio_io import DEFAULT_PROFILES, AnomalySpec, InjectionKind, load_dataset, synth_clip, write_wav
from .dsp import BANDS, StftConfig, band_bin_ranges, stft_magnitude
from .errors import BandFaithError
from .faithfulness.ablation import ablation_study, detection_metrics
from .faithfulness.evaluate import RANDOM_CONTROL, evaluate_faithfulness, sample_id_of, sample_seed
from .faithfulness.report import (
    ablation_csv,
    ablation_machine_csv,
    dump_json,
    faithfulness_csv,
    faithfulness_json,
)
from .model import (
    ModelConfig,
    ScoreFunction,
    TrainConfig,
    auxiliary_accuracy,
    clip_spectrograms,
    load_checkpoint,
    prepare_input,
    save_checkpoint,
    scores_for_grids,
    train,
)
from .rng import make_rng
from .xai import METHOD_NAMES, XaiConfig, band_mean_relevance, explain, save_map

logger = logging.getLogger("bandfaith")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
CONFIG_SIDECAR = "effective_config.json"

DEFAULT_CONFIG = {
    "seed": 0,
    "jobs": 1,
    "synth": {
        "machines": ["fan", "pump"],
        "train_per_machine": 200,
        "test_per_machine": 50,
        "anomaly_fraction": 0.5,
        "anomaly_band_index": 2,
        "anomaly_kind": "tone_burst",
        "snr_db": 0.0,
    },
    "stft": {"fft_size": 1024, "hop": 512},
    "model": {"channels": [8, 16, 16], "first_stride": 2, "embedding_dim": 64, "t_in": 64},
    "train": {"epochs": 10, "batch_size": 32, "learning_rate": 0.005, "augmentation": True},
    "xai": {
        "methods": list(METHOD_NAMES),
        "ig_steps": 64,
        "occlusion_window": [8, 64],
        "occlusion_stride": None,
        "occlusion_fill": 0.0,
        "smoothgrad_samples": 25,
        "smoothgrad_sigma": 0.1,
        "gradcam_layer": "last_conv",
        "normalization": "abs",
        "max_samples": None,
    },
    "evaluation": {
        "max_fpr": 0.1,
        "harmonic_mean": False,
        "band_indices": [0, 1, 2, 3, 4],
        "random_control": True,
    },
}

# tiny sizes for the end-to-end smoke pipeline
SMOKE_CONFIG = {
    "synth": {"train_per_machine": 40, "test_per_machine": 10},
    "train": {"epochs": 3},
    "xai": {"ig_steps": 16, "smoothgrad_samples": 8, "max_samples": 2},
}


class ConfigError(BandFaithError):
    """Invalid command line or configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def merge_config(base: dict, override: dict, where: str = "config") -> dict:
    """Recursive merge; keys absent from ``base`` are rejected."""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown key {where}.{key}; valid keys: {', '.join(sorted(base))}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}.{key} must be an object")
            out[key] = merge_config(base[key], value, f"{where}.{key}")
        else:
            out[key] = value
    return out


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")
    return data


def _flag_overrides(args: argparse.Namespace) -> dict:
    over: dict = {}

    def put(section, key, value):
        if value is not None:
            (over.setdefault(section, {}) if section else over)[key] = value

    put(None, "seed", getattr(args, "seed", None))
    put(None, "jobs", getattr(args, "jobs", None))
    put("train", "epochs", getattr(args, "epochs", None))
    put("synth", "machines", getattr(args, "machines", None))
    put("synth", "train_per_machine", getattr(args, "clips_per_machine", None))
    put("synth", "test_per_machine", getattr(args, "test_per_machine", None))
    put("synth", "anomaly_band_index", getattr(args, "anomaly_band", None))
    put("synth", "anomaly_kind", getattr(args, "anomaly_kind", None))
    put("synth", "snr_db", getattr(args, "snr_db", None))
    put("xai", "methods", getattr(args, "methods", None))
    put("xai", "normalization", getattr(args, "normalization", None))
    put("xai", "max_samples", getattr(args, "max_samples", None))
    if getattr(args, "harmonic_mean", False):
        put("evaluation", "harmonic_mean", True)
    if getattr(args, "no_random_control", False):
        put("evaluation", "random_control", False)
    return over


def effective_config(args: argparse.Namespace, base: Optional[dict] = None) -> dict:
    cfg = copy.deepcopy(base or DEFAULT_CONFIG)
    if getattr(args, "config", None):
        cfg = merge_config(cfg, read_config_file(args.config))
    cfg = merge_config(cfg, _flag_overrides(args), "flag")
    validate_config(cfg)
    return cfg


def _int(value, name, minimum=0) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return value


def validate_config(cfg: dict) -> None:
    _int(cfg["seed"], "seed")
    _int(cfg["jobs"], "jobs", 1)
    syn = cfg["synth"]
    known = {p.name for p in DEFAULT_PROFILES}
    if not syn["machines"] or any(m not in known for m in syn["machines"]):
        raise ConfigError(f"synth.machines must be a non-empty subset of {sorted(known)}, got {syn['machines']}")
    if len(set(syn["machines"])) != len(syn["machines"]):
        raise ConfigError("synth.machines contains duplicates")
    _int(syn["train_per_machine"], "clips per machine", 1)
    _int(syn["test_per_machine"], "test clips per machine", 0)
    if not 0 <= syn["anomaly_fraction"] <= 1:
        raise ConfigError("synth.anomaly_fraction must be in [0, 1]")
    _int(syn["anomaly_band_index"], "anomaly band index")
    if syn["anomaly_band_index"] >= len(BANDS):
        raise ConfigError(f"anomaly band index must be < {len(BANDS)}")
    if syn["anomaly_kind"] not in [k.value for k in InjectionKind]:
        raise ConfigError(f"unknown anomaly kind {syn['anomaly_kind']!r}; valid: "
                          + ", ".join(k.value for k in InjectionKind))
    methods = cfg["xai"]["methods"]
    bad = [m for m in methods if m not in METHOD_NAMES]
    if bad or not methods:
        raise ConfigError(f"unknown method(s) {bad}; valid methods: {', '.join(METHOD_NAMES)}")
    if cfg["xai"]["max_samples"] is not None:
        _int(cfg["xai"]["max_samples"], "xai.max_samples", 1)
    bands = cfg["evaluation"]["band_indices"]
    if any(isinstance(b, bool) or not isinstance(b, int) or not 0 <= b < len(BANDS) for b in bands):
        raise ConfigError(f"evaluation.band_indices must be in [0, {len(BANDS) - 1}]")
    try:
        build_objects(cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}")


def build_objects(cfg: dict) -> tuple:
    """``(StftConfig, ModelConfig, TrainConfig, XaiConfig)`` from a validated dict."""
    stft = StftConfig(**cfg["stft"])
    mc = cfg["model"]
    model_cfg = ModelConfig(tuple(mc["channels"]), mc["first_stride"], mc["embedding_dim"], mc["t_in"],
                            stft.n_bins)
    train_cfg = TrainConfig(seed=cfg["seed"], **cfg["train"])
    x = {k: v for k, v in cfg["xai"].items() if k not in ("methods", "max_samples")}
    xai_cfg = XaiConfig(**x)
    return stft, model_cfg, train_cfg, xai_cfg


def _provenance(cfg: dict, command: str, paths: dict) -> dict:
    # worker count does not change any result, so it stays out of the record
    recorded = {k: v for k, v in cfg.items() if k != "jobs"}
    return {"command": command, "version": __version__, "paths": paths, "config": recorded}


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _require_dir(path, what: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise ConfigError(f"{what} not found: {p}")
    return p


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"{what} not found: {p}")
    return p


def load_clips(root) -> list:
    """Dataset clips with ``source_path`` relative to ``root`` for stable sample ids."""
    root = Path(root)
    clips = load_dataset(root)
    for c in clips:
        c.source_path = Path(c.source_path).relative_to(root).as_posix()
    return clips


def _split(clips, split: str) -> list:
    return [c for c in clips if c.split == split]


def _limit_per_machine(clips, n: Optional[int]) -> list:
    if n is None:
        return list(clips)
    seen: dict = {}
    out = []
    for c in clips:
        if seen.get(c.machine_id, 0) < n:
            out.append(c)
            seen[c.machine_id] = seen.get(c.machine_id, 0) + 1
    return out


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _fmt(v: float) -> str:
    return f"{v:.6f}"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_synth(args, cfg: dict) -> int:
    syn = cfg["synth"]
    out = Path(args.out)
    profiles = {p.name: p for p in DEFAULT_PROFILES}
    anomaly = AnomalySpec(syn["anomaly_band_index"], syn["anomaly_kind"], float(syn["snr_db"]))
    n_anom = int(round(syn["test_per_machine"] * syn["anomaly_fraction"]))
    files = []
    try:
        for machine in syn["machines"]:
            profile = profiles[machine]
            plan = [("train", "normal", i) for i in range(syn["train_per_machine"])]
            plan += [("test", "anomaly" if i < n_anom else "normal", i) for i in range(syn["test_per_machine"])]
            for split, label, i in plan:
                clip_seed = int(make_rng(cfg["seed"], "synth-clip", machine, split, i).integers(2 ** 31))
                clip = synth_clip(profile, anomaly if label == "anomaly" else None, clip_seed, split=split)
                rel = f"{machine}/{split}/{label}_{i:04d}.wav"
                write_wav(out / rel, clip.waveform)
                files.append({"path": rel, "machine_id": machine, "split": split,
                              "condition": clip.condition.value, "seed": clip_seed})
    except OSError as exc:
        raise BandFaithError(f"cannot write dataset under {out}: {exc}")
    manifest = _provenance(cfg, "synth", {"out": str(args.out)})
    manifest["profiles"] = {m: {k: (list(v) if isinstance(v, tuple) else v)
                                for k, v in vars(profiles[m]).items()} for m in syn["machines"]}
    manifest["anomaly"] = {"target_band_index": anomaly.target_band_index, "band_hz": list(anomaly.band_hz),
                           "injection_kind": anomaly.injection_kind.value, "snr_db": anomaly.snr_db}
    manifest["files"] = files
    dump_json(manifest, out / "manifest.json")
    print(f"wrote {len(files)} clips to {out}")
    return EXIT_OK


def cmd_train(args, cfg: dict) -> int:
    root = _require_dir(args.dataset, "dataset")
    stft, model_cfg, train_cfg, _ = build_objects(cfg)
    clips = load_clips(root)
    train_clips = _split(clips, "train")
    if not train_clips:
        raise ConfigError(f"dataset {root} has no train/ clips")
    specs = clip_spectrograms(train_clips, stft)
    t0 = time.perf_counter()
    model = train(train_clips, train_cfg, model_cfg, stft, specs)
    logger.info("training took %.1f s", time.perf_counter() - t0)
    prov = _provenance(cfg, "train", {"dataset": str(args.dataset), "checkpoint": str(args.out)})
    save_checkpoint(model, args.out, prov)

    test_normals = [c for c in _split(clips, "test") if not c.is_anomalous]
    acc = auxiliary_accuracy(model, test_normals or train_clips, cfg["seed"])
    summary = {"auxiliary_accuracy": acc, "accuracy_clips": "test normals" if test_normals else "train",
               "final_loss": model.loss_history[-1], "loss_history": model.loss_history,
               "mean_normal_score": {}}
    print(f"auxiliary accuracy: {_fmt(acc)}")
    for m in model.machine_ids:
        idx = [i for i, c in enumerate(train_clips) if c.machine_id == m]
        grids = np.stack([prepare_input(model, specs[i]) for i in idx])
        score = float(np.mean(scores_for_grids(model, grids, m)))
        summary["mean_normal_score"][m] = score
        print(f"mean normal score {m}: {_fmt(score)}")
    test = _split(clips, "test")
    if test and any(c.is_anomalous for c in test) and not all(c.is_anomalous for c in test):
        ev = cfg["evaluation"]
        metrics = detection_metrics(model, test, max_fpr=ev["max_fpr"], harmonic_mean=ev["harmonic_mean"])
        summary["test_metrics"] = {"per_machine_auc": metrics.per_machine_auc,
                                   "per_machine_pauc": metrics.per_machine_pauc,
                                   "mean_auc": metrics.mean_auc, "mean_pauc": metrics.mean_pauc}
        print(f"test mean AUC {_fmt(metrics.mean_auc)}  pAUC {_fmt(metrics.mean_pauc)}")
    dump_json({**prov, "summary": summary}, Path(str(args.out) + ".json"))
    return EXIT_OK


def _explain_one(model, clip, sample_id, methods, xai_cfg, seed, out: Path):
    f = ScoreFunction(model, clip.machine_id)
    x = prepare_input(model, stft_magnitude(clip.waveform, model.stft))
    bins = band_bin_ranges(model.stft, model.sample_rate_hz)
    rows = []
    stem_dir = out / "maps" / Path(sample_id).with_suffix("")
    for method in methods:
        amap = explain(f, x, method, xai_cfg, seed=sample_seed(seed, sample_id))
        save_map(amap, stem_dir / method, {"sample_id": sample_id, "machine_id": clip.machine_id})
        rows.append([sample_id, clip.machine_id, method] + [_fmt(v) for v in band_mean_relevance(amap.normalized, bins)])
    return rows


def cmd_explain(args, cfg: dict) -> int:
    root = _require_dir(args.dataset, "dataset")
    model = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    _, _, _, xai_cfg = build_objects(cfg)
    test = _limit_per_machine(_split(load_clips(root), "test"), cfg["xai"]["max_samples"])
    test = [c for c in test if c.machine_id in model.centroids]
    out = Path(args.out)
    methods = cfg["xai"]["methods"]
    ids = [sample_id_of(c, i) for i, c in enumerate(test)]

    def work(i):
        return _explain_one(model, test[i], ids[i], methods, xai_cfg, cfg["seed"], out)

    if cfg["jobs"] > 1:
        with ThreadPoolExecutor(max_workers=cfg["jobs"]) as pool:
            results = list(pool.map(work, range(len(test))))
    else:
        results = [work(i) for i in range(len(test))]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["sample_id", "machine", "method"] + [f"band{b.index + 1}" for b in BANDS])
    for rows in results:
        w.writerows(rows)
    _write_text(out / "band_relevance.csv", buf.getvalue())
    dump_json(_provenance(cfg, "explain", {"checkpoint": str(args.checkpoint), "dataset": str(args.dataset),
                                           "out": str(args.out)}), out / CONFIG_SIDECAR)
    print(f"wrote {len(test) * len(methods)} maps for {len(test)} samples to {out}")
    return EXIT_OK


def cmd_ablate(args, cfg: dict) -> int:
    root = _require_dir(args.dataset, "dataset")
    stft, model_cfg, train_cfg, _ = build_objects(cfg)
    clips = load_clips(root)
    train_clips, test = _split(clips, "train"), _split(clips, "test")
    if not train_clips or not test:
        raise ConfigError(f"dataset {root} needs both train/ and test/ clips")
    ev = cfg["evaluation"]
    results = ablation_study(train_clips, test, train_cfg, ev["band_indices"], model_cfg, stft,
                             ev["max_fpr"], ev["harmonic_mean"])
    out = Path(args.out)
    _write_text(out, ablation_csv(results))
    _write_text(out.with_name(out.stem + "_machines.csv"), ablation_machine_csv(results))
    dump_json({**_provenance(cfg, "ablate", {"dataset": str(args.dataset), "out": str(args.out)}),
               "results": [vars(r) for r in results]}, out.with_suffix(".json"))
    for r in results:
        print(f"{r.condition:>5}  mean AUC {_fmt(r.mean_auc)}  pAUC {_fmt(r.mean_pauc)}  dAUC {r.delta_mean_auc:+.6f}")
    return EXIT_OK


def cmd_faithfulness(args, cfg: dict) -> int:
    root = _require_dir(args.dataset, "dataset")
    model = load_checkpoint(_require_file(args.checkpoint, "checkpoint"))
    _, _, _, xai_cfg = build_objects(cfg)
    test = [c for c in _split(load_clips(root), "test") if c.machine_id in model.centroids]
    if not test:
        raise ConfigError(f"dataset {root} has no test/ clips for the checkpoint's machines")
    methods = list(cfg["xai"]["methods"])
    if cfg["evaluation"]["random_control"]:
        methods.append(RANDOM_CONTROL)
    records, samples = evaluate_faithfulness(model, test, methods, xai_cfg, cfg["seed"], cfg["jobs"])
    out = Path(args.out)
    _write_text(out / "faithfulness.csv", faithfulness_csv(records))
    prov = _provenance(cfg, "faithfulness", {"checkpoint": str(args.checkpoint), "dataset": str(args.dataset),
                                             "out": str(args.out)})
    dump_json(faithfulness_json(records, samples, prov), out / "faithfulness.json")
    for r in records:
        if r.machine_id == "overall":
            rho = "nan" if r.rho_bar is None else _fmt(r.rho_bar)
            print(f"overall {r.method:>22}  rho_bar {rho}  pooled p {r.pooled_p}")
    return EXIT_OK


def cmd_smoke(args, cfg: dict) -> int:
    """Tiny end-to-end run of every stage under ``args.out``."""
    out = Path(args.out)
    ns = argparse.Namespace
    steps = [
        (cmd_synth, ns(out=str(out / "data"))),
        (cmd_train, ns(dataset=str(out / "data"), out=str(out / "model.ckpt"))),
        (cmd_explain, ns(dataset=str(out / "data"), checkpoint=str(out / "model.ckpt"), out=str(out / "explain"))),
        (cmd_ablate, ns(dataset=str(out / "data"), out=str(out / "ablation.csv"))),
        (cmd_faithfulness, ns(dataset=str(out / "data"), checkpoint=str(out / "model.ckpt"),
                              out=str(out / "faithfulness"))),
    ]
    for fn, step_args in steps:
        t0 = time.perf_counter()
        fn(step_args, cfg)
        logger.info("%s finished in %.1f s", fn.__name__, time.perf_counter() - t0)
    dump_json(_provenance(cfg, "smoke", {"out": str(args.out)}), out / CONFIG_SIDECAR)
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _csv_list(text: str) -> list:
    return [t.strip() for t in text.split(",") if t.strip()]


def _methods(text: str) -> list:
    methods = _csv_list(text)
    bad = [m for m in methods if m not in METHOD_NAMES]
    if bad or not methods:
        raise argparse.ArgumentTypeError(f"unknown method(s) {', '.join(bad) or '(none)'}; "
                                         f"valid methods: {', '.join(METHOD_NAMES)}")
    return methods


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bandfaith", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its values")
    common.add_argument("--seed", type=int, help="master seed for every random operation")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    jobs = argparse.ArgumentParser(add_help=False)
    jobs.add_argument("--jobs", type=int, help="worker threads over samples (output order is fixed)")
    methods = argparse.ArgumentParser(add_help=False)
    methods.add_argument("--methods", type=_methods, help=f"comma list from: {', '.join(METHOD_NAMES)}")
    methods.add_argument("--normalization", choices=("abs", "clip"), help="negative relevance handling")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic labelled dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--machines", type=_csv_list, help="comma list of machine profiles")
    p.add_argument("--clips-per-machine", type=int, help="normal training clips per machine")
    p.add_argument("--test-per-machine", type=int, help="test clips per machine")
    p.add_argument("--anomaly-band", type=int, help="0-based index of the band receiving anomalies")
    p.add_argument("--anomaly-kind", help="tone_burst, noise_burst or harmonic_shift")
    p.add_argument("--snr-db", type=float, help="anomaly level relative to the band's normal RMS")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", parents=[common], help="train the full-spectrum scorer")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explain", parents=[common, jobs, methods], help="write attribution maps for test clips")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--max-samples", type=int, help="test clips per machine (default all)")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("ablate", parents=[common], help="retrain with each band removed")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="ablation CSV path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--harmonic-mean", action="store_true", help="harmonic instead of arithmetic mean AUC")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("faithfulness", parents=[common, jobs, methods], help="rank agreement report")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-random-control", action="store_true", help="skip the random-map null control")
    p.set_defaults(func=cmd_faithfulness)

    p = sub.add_parser("smoke", parents=[common, jobs], help="tiny end-to-end pipeline run")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_smoke)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        base = merge_config(DEFAULT_CONFIG, SMOKE_CONFIG) if args.command == "smoke" else DEFAULT_CONFIG
        cfg = effective_config(args, base)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"bandfaith {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (BandFaithError, OSError, ValueError) as exc:
        print(f"bandfaith {args.command}: failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
