"""Readers for the scheduler's run artifacts (metrics.csv and run.json).

Rendering is read-only over these inputs; any schema deviation is reported
with the offending column or key.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

METRICS_COLUMNS = ("episode", "slot", "reward", "cumulative_profit",
                   "completion_rate", "jain_index", "cluster_count",
                   "critic_loss", "actor_objective")

INT_COLUMNS = {"episode", "slot", "cluster_count"}


class SchemaError(ValueError):
    pass


def read_metrics(path: str | Path) -> dict[str, np.ndarray]:
    """Parse one metrics.csv into a column dict; validates the header."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"metrics file not found: {p}")
    with p.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise SchemaError(f"{p}: empty file")
        for want, got in zip(METRICS_COLUMNS, header):
            if want != got:
                raise SchemaError(f"{p}: expected column {want!r}, got {got!r}")
        if len(header) != len(METRICS_COLUMNS):
            raise SchemaError(f"{p}: expected {len(METRICS_COLUMNS)} columns, "
                              f"got {len(header)}")
        rows = list(reader)
    out: dict[str, np.ndarray] = {}
    for j, name in enumerate(METRICS_COLUMNS):
        try:
            vals = [float(r[j]) for r in rows]
        except (ValueError, IndexError) as exc:
            raise SchemaError(f"{p}: bad value in column {name!r}: {exc}")
        dtype = int if name in INT_COLUMNS else float
        out[name] = np.array(vals, dtype=dtype)
    return out


def read_run_json(path: str | Path) -> dict:
    """Parse one run.json; requires the config/totals envelope."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"run summary not found: {p}")
    data = json.loads(p.read_text())
    for key in ("config", "totals"):
        if key not in data:
            raise SchemaError(f"{p}: missing key {key!r}")
    return data


def sibling_run_json(metrics_path: str | Path) -> Path:
    return Path(metrics_path).parent / "run.json"


def moving_average(values, window: int) -> np.ndarray:
    """Trailing moving average; partial windows at the start use the
    available prefix, so window=1 is the identity."""
    values = np.asarray(values, dtype=float)
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    if window == 1 or values.size == 0:
        return values.copy()
    out = np.empty_like(values)
    csum = np.concatenate([[0.0], np.cumsum(values)])
    for i in range(values.size):
        lo = max(0, i - window + 1)
        out[i] = (csum[i + 1] - csum[lo]) / (i + 1 - lo)
    return out
