"""JSON and CSV writers for faithfulness and ablation results."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .ablation import AblationResult
from .evaluate import FaithfulnessRecord, SampleEvaluation


def _fmt(v) -> str:
    return "" if v is None else f"{v:.6f}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return obj


def dump_json(obj, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")


def faithfulness_csv(records: Sequence[FaithfulnessRecord]) -> str:
    """One row per machine x method, long format."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["machine", "method", "rho_bar", "pooled_rho", "pooled_p", "n", "degenerate_count"])
    for r in records:
        w.writerow([r.machine_id, r.method, _fmt(r.rho_bar), _fmt(r.pooled_rho), _fmt(r.pooled_p),
                    r.n_samples, r.degenerate_count])
    return buf.getvalue()


def faithfulness_json(records: Sequence[FaithfulnessRecord], samples: Sequence[SampleEvaluation],
                      config: Optional[dict] = None) -> dict:
    return {
        "config": config or {},
        "records": [asdict(r) for r in records],
        "samples": [
            {
                "sample_id": s.sample_id,
                "machine_id": s.machine_id,
                "anomalous": s.anomalous,
                "pred_original": s.sensitivity.pred_original,
                "delta_pred": s.sensitivity.delta_pred,
                "band_relevance": s.relevance,
                "rho": {m: (None if v is None else {"rho": v[0], "p": v[1]}) for m, v in s.rho.items()},
            }
            for s in samples
        ],
    }


def ablation_csv(results: Sequence[AblationResult]) -> str:
    """One row per condition with mean AUC/pAUC."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["condition", "masked_band", "mean_auc", "mean_pauc", "delta_mean_auc"])
    for r in results:
        w.writerow([r.condition, "" if r.masked_band is None else r.masked_band + 1,
                    _fmt(r.mean_auc), _fmt(r.mean_pauc), _fmt(r.delta_mean_auc)])
    return buf.getvalue()


def ablation_machine_csv(results: Sequence[AblationResult]) -> str:
    """Per-machine AUC/pAUC per condition (the bar-chart data)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["machine", "condition", "auc", "pauc"])
    for r in results:
        for m in sorted(r.per_machine_auc):
            w.writerow([m, r.condition, _fmt(r.per_machine_auc[m]), _fmt(r.per_machine_pauc[m])])
    return buf.getvalue()
