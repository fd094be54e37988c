import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy import stats

from ..errors import ArgumentError, CoraError

CURVE_COLUMNS = ("step", "eval_return_mean", "eval_return_ci95", "actor_loss",
                 "critic_loss", "mean_epsilon", "qp_iters_mean")

DIAG_COLUMNS = ("step", "updates", "rows", "dropped_steps", "qp_retries", "mean_epsilon",
                "max_epsilon", "qp_iters_mean", "qp_iters_max", "qp_ms", "v_loss",
                "q1_loss", "q2_loss", "entropy")

CHECKPOINT_FORMAT = "cora-checkpoint"
CHECKPOINT_VERSION = 1


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def ci95(values) -> float:
    """1.96 · standard error; 0 for fewer than two values."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(1.96 * stats.sem(values))


# ─────────────────────────────────────────────────────────────────────────────
# CSV
# ─────────────────────────────────────────────────────────────────────────────

def write_rows(path, columns, rows, append: bool = False) -> Path:
    path = Path(path)
    new_file = not (append and path.exists())
    try:
        with path.open("a" if append else "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            if new_file:
                writer.writerow(columns)
            for row in rows:
                writer.writerow([_cell(row.get(c)) for c in columns])
    except OSError as e:
        raise CoraError(f"[RunIO] cannot write {path}: {e}") from e
    return path


def emit_curve(path, rows, append: bool = False) -> Path:
    return write_rows(path, CURVE_COLUMNS, rows, append)


def read_curve(path) -> list[dict]:
    path = Path(path)
    try:
        with path.open(newline="") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != CURVE_COLUMNS:
                raise ArgumentError(f"[RunIO] {path} does not have the curve columns")
            return [{k: (float(v) if v != "" else None) for k, v in row.items()} for row in reader]
    except OSError as e:
        raise CoraError(f"[RunIO] cannot read {path}: {e}") from e


def aggregate_curves(paths) -> list[dict]:
    """Mean evaluation return and 95% CI across seeds, per step present in every curve."""
    curves = [read_curve(p) for p in paths]
    if not curves:
        return []
    by_step = [{int(r["step"]): r for r in c} for c in curves]
    common = sorted(set.intersection(*(set(d) for d in by_step)))
    rows = []
    for step in common:
        seeds = [d[step] for d in by_step]
        returns = [r["eval_return_mean"] for r in seeds]
        row = {"step": step, "eval_return_mean": float(np.mean(returns)),
               "eval_return_ci95": ci95(returns)}
        for col in CURVE_COLUMNS[3:]:
            vals = [r[col] for r in seeds if r[col] is not None]
            row[col] = float(np.mean(vals)) if vals else None
        rows.append(row)
    return rows


# ─────────────────────────────────────────────────────────────────────────────
# Checkpoints (JSON): every parameter tensor as {"shape", "data"}
# ─────────────────────────────────────────────────────────────────────────────

def _tensor_doc(t: torch.Tensor) -> dict:
    t = t.detach().to(torch.float64).cpu()
    return {"shape": list(t.shape), "data": t.reshape(-1).tolist()}


def save_checkpoint(path, step: int, config: dict, env: dict, modules: dict) -> Path:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "step": int(step),
        "config": config,
        "env": env,
        "modules": {name: {"arch": m.arch(),
                           "params": {k: _tensor_doc(v) for k, v in m.state_dict().items()}}
                    for name, m in modules.items()},
    }
    path = Path(path)
    try:
        path.write_text(json.dumps(doc))
    except OSError as e:
        raise CoraError(f"[RunIO] cannot write checkpoint {path}: {e}") from e
    return path


def load_checkpoint(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ArgumentError(f"[RunIO] cannot load checkpoint {path}: {e}") from e
    if doc.get("format") != CHECKPOINT_FORMAT or doc.get("version") != CHECKPOINT_VERSION:
        raise ArgumentError(f"[RunIO] {path} is not a version-{CHECKPOINT_VERSION} checkpoint")
    return doc


def restore_module(module: torch.nn.Module, entry: dict) -> torch.nn.Module:
    state = {k: torch.tensor(v["data"], dtype=torch.float64).reshape(v["shape"])
             for k, v in entry["params"].items()}
    module.load_state_dict(state)
    return module


# ─────────────────────────────────────────────────────────────────────────────
# Run manifest and abort dumps
# ─────────────────────────────────────────────────────────────────────────────

@dataclass
class RunManifest:
    config_digest: str
    seed: int
    version: str
    env_digest: str
    started: float = field(default_factory=time.time)
    finished: float | None = None
    outputs: list[str] = field(default_factory=list)

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        if path.name not in self.outputs:
            self.outputs.append(path.name)
        try:
            path.write_text(json.dumps(asdict(self), indent=2, sort_keys=True))
        except OSError as e:
            raise CoraError(f"[RunIO] cannot write {path}: {e}") from e
        return path


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def dump_abort_batch(out_dir, batch: dict, diagnostics: dict) -> Path:
    path = Path(out_dir) / "abort_batch.json"
    doc = {"diagnostics": _jsonable(diagnostics), "batch": _jsonable(batch)}
    path.write_text(json.dumps(doc))
    logging.error(f"[Train] offending batch written to {path}")
    return path
