"""CSV/JSON persistence of trajectories and reports.

Every data file is a pure function of its inputs: floats are written with
``repr`` (shortest round-trip form) and JSON keys are sorted, so reruns are
byte-identical.  Wall-clock information goes to ``metadata.json`` only.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
from pathlib import Path

import numpy as np

from . import __version__
from .discrete import TrajectoryEnsemble
from .linalg import matrix_to_json


def entry_columns(dim: int) -> list[str]:
    re = [f"re_{a}{b}" for a in range(dim) for b in range(dim)]
    im = [f"im_{a}{b}" for a in range(dim) for b in range(dim)]
    return re + im


def _num(x) -> str:
    return repr(float(x))


def state_row(rho: np.ndarray) -> list[str]:
    flat = np.asarray(rho, dtype=complex).ravel()
    return [_num(x) for x in flat.real] + [_num(x) for x in flat.imag]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj) and obj.ndim == 2:
            return matrix_to_json(obj)
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if np.isnan(x) or np.isinf(x):
            return repr(x)
        return x
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text if text.endswith("\n") else text + "\n")
    return path


def write_metadata(out_dir, command: str, config_source: str | None, extra: dict | None = None) -> Path:
    meta = {
        "command": command,
        "config": config_source,
        "version": __version__,
        "written_at": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    meta.update(extra or {})
    return write_json(Path(out_dir) / "metadata.json", meta)


def write_path_csv(path, times, states, marks=None, mark_name: str = "outcome") -> Path:
    """One row per recorded time: time, mark (blank when absent), then the entries of rho."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = states.shape[-1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", mark_name] + entry_columns(dim))
        for r, (t, rho) in enumerate(zip(times, states)):
            mark = "" if marks is None or marks[r] is None else str(int(marks[r]))
            w.writerow([_num(t), mark] + state_row(rho))
    return path


def discrete_marks(ensemble: TrajectoryEnsemble, path: int) -> list:
    """Outcome of the step that produced each recorded state (none at t = 0)."""
    if ensemble.outcomes is None:
        return [None] * len(ensemble.steps)
    return [None if k == 0 else int(ensemble.outcomes[path, k - 1]) for k in ensemble.steps]


def write_jump_log(path, logs, path_indices) -> Path:
    """time, channel, acceptance uniform (xi / K) and pre/post-jump entries, per path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dim = None
    rows = []
    for j, log in zip(path_indices, logs):
        for t, ch, u, pre, post in log:
            dim = pre.shape[0]
            rows.append([str(int(j)), _num(t), str(int(ch)), _num(u)] + state_row(pre) + state_row(post))
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = entry_columns(dim or 1)
        w.writerow(["path", "time", "channel", "acceptance_uniform"]
                   + [f"pre_{c}" for c in cols] + [f"post_{c}" for c in cols])
        w.writerows(rows)
    return path


def ensemble_summary(ensemble: TrajectoryEnsemble) -> dict:
    """Per recorded time: mean state, entrywise standard errors; plus outcome/jump totals."""
    m = ensemble.n_paths
    per_time = []
    for r, t in enumerate(ensemble.time_grid):
        s = ensemble.states[:, r]
        mean = s.mean(axis=0)
        if m > 1:
            se = (s.real.std(axis=0, ddof=1) + 1j * s.imag.std(axis=0, ddof=1)) / np.sqrt(m)
        else:
            se = np.zeros_like(mean)
        per_time.append({"time": float(t), "mean": matrix_to_json(mean), "standard_error": matrix_to_json(se)})
    out = {
        "kind": ensemble.kind,
        "paths": m,
        "seed": int(ensemble.seed),
        "step_size": float(ensemble.step_size),
        "per_time": per_time,
    }
    if ensemble.counts is not None:
        key = "outcome_counts" if ensemble.kind == "discrete" else "jump_counts"
        out[key] = [int(x) for x in ensemble.counts.sum(axis=0)]
    if ensemble.intensity is not None:
        out["integrated_intensity"] = [float(x) for x in ensemble.intensity.sum(axis=0)]
    for key in ("n", "horizon", "dt", "k_trunc", "intensity_bound", "jump_channels", "noise_channels",
                "max_renormalization"):
        if key in ensemble.meta:
            out[key] = ensemble.meta[key]
    if "max_abs_coordinate" in ensemble.meta:
        out["max_abs_coordinate"] = float(np.max(ensemble.meta["max_abs_coordinate"]))
    return out
