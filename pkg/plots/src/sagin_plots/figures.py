"""Figure builders over scheduler run artifacts.

Every kind produces an image plus a machine-readable JSON sidecar
(`<out>.json`) holding exactly the plotted series, so downstream checks can
round-trip the data without re-parsing the figure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .io import (SchemaError, moving_average, read_metrics, read_run_json,
                 sibling_run_json)

KINDS = ("reward", "profit-time", "clusters", "convergence", "profit-rate",
         "scenario-profit", "scenario-completion")

# kinds whose inputs are per-slot metrics.csv files rather than run.json
CSV_KINDS = ("reward", "profit-time", "clusters")


@dataclass
class FigureSpec:
    kind: str
    inputs: list[str]
    output: str
    window: int = 1
    image_format: str = "png"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        if not self.inputs:
            raise ValueError("at least one input path is required")
        missing = [p for p in self.inputs if not Path(p).exists()]
        if missing:
            raise FileNotFoundError(f"missing inputs: {missing}")


def _run_label(metrics_path: str) -> str:
    rj = sibling_run_json(metrics_path)
    if rj.exists():
        totals = read_run_json(rj)["totals"]
        return f"{totals['algorithm']} (seed {totals['seed']})"
    return Path(metrics_path).parent.name or Path(metrics_path).stem


def _series_figure(spec: FigureSpec, column: str, ylabel: str,
                   title: str, smooth: bool) -> dict:
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series = []
    for path in spec.inputs:
        cols = read_metrics(path)
        y = cols[column].astype(float)
        if smooth:
            y = moving_average(y, spec.window)
        x = np.arange(y.size)
        label = _run_label(path)
        ax.plot(x, y, label=label, linewidth=1.0)
        series.append({"label": label, "x": x.tolist(), "y": y.tolist()})
    ax.set_xlabel("slot index")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, spec)
    return {"kind": spec.kind, "window": spec.window, "series": series}


def _totals(spec: FigureSpec) -> list[dict]:
    runs = []
    for path in spec.inputs:
        data = read_run_json(path)
        runs.append({"config": data["config"], "totals": data["totals"]})
    return runs


def _group_mean(runs: list[dict], key_fn, value_fn) -> tuple[list, list]:
    groups: dict = {}
    for run in runs:
        groups.setdefault(key_fn(run), []).append(value_fn(run))
    keys = sorted(groups)
    return keys, [float(np.mean(groups[k])) for k in keys]


def _bar_by_scenario(spec: FigureSpec, value_key: str, ylabel: str,
                     title: str, normalize: bool) -> dict:
    runs = _totals(spec)
    scenarios = sorted({r["totals"]["scenario"] for r in runs})
    algorithms = sorted({r["totals"]["algorithm"] for r in runs})
    table = {}
    for scenario in scenarios:
        for algo in algorithms:
            vals = [r["totals"][value_key] for r in runs
                    if r["totals"]["scenario"] == scenario
                    and r["totals"]["algorithm"] == algo]
            if vals:
                table[(scenario, algo)] = float(np.mean(vals))
    if normalize:
        # per-scenario max across algorithms = 1.0 (Fig. 8 convention)
        for scenario in scenarios:
            peak = max((v for (s, _), v in table.items() if s == scenario),
                       default=0.0)
            if peak > 0:
                for algo in algorithms:
                    if (scenario, algo) in table:
                        table[(scenario, algo)] /= peak

    fig, ax = plt.subplots(figsize=(7, 4.5))
    width = 0.8 / max(len(algorithms), 1)
    xs = np.arange(len(scenarios))
    series = []
    for a_i, algo in enumerate(algorithms):
        heights = [table.get((s, algo), 0.0) for s in scenarios]
        ax.bar(xs + a_i * width, heights, width, label=algo)
        series.append({"label": algo, "x": scenarios, "y": heights})
    ax.set_xticks(xs + width * (len(algorithms) - 1) / 2)
    ax.set_xticklabels(scenarios)
    ax.set_xlabel("scenario")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, spec)
    return {"kind": spec.kind, "window": spec.window, "series": series}


def _scatter_over_config(spec: FigureSpec, key_fn, value_fn, xlabel: str,
                         ylabel: str, title: str) -> dict:
    runs = _totals(spec)
    keys, means = _group_mean(runs, key_fn, value_fn)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(keys, means, marker="o")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    _save(fig, spec)
    return {"kind": spec.kind, "window": spec.window,
            "series": [{"label": ylabel, "x": keys, "y": means}]}


def _save(fig, spec: FigureSpec) -> None:
    out = Path(spec.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format=spec.image_format, dpi=120)
    plt.close(fig)


def render(spec: FigureSpec) -> dict:
    """Render one figure; writes the image and the `<out>.json` sidecar and
    returns the sidecar payload."""
    if spec.kind == "reward":
        payload = _series_figure(spec, "reward", "reward (profit units)",
                                 "Per-slot reward", smooth=True)
    elif spec.kind == "profit-time":
        payload = _series_figure(spec, "cumulative_profit",
                                 "cumulative profit", "System profit over time",
                                 smooth=False)
    elif spec.kind == "clusters":
        payload = _series_figure(spec, "cluster_count", "cluster count",
                                 "Cluster count over time", smooth=False)
    elif spec.kind == "convergence":
        payload = _scatter_over_config(
            spec, key_fn=lambda r: r["config"]["n_uavs"],
            value_fn=lambda r: r["totals"]["convergence_episode"],
            xlabel="UAV count", ylabel="convergence episode",
            title="Convergence vs network size")
    elif spec.kind == "profit-rate":
        payload = _scatter_over_config(
            spec, key_fn=lambda r: r["config"]["arrival_rate"],
            value_fn=lambda r: r["totals"]["mean_final_window_profit"],
            xlabel="arrival rate (tasks/s)", ylabel="mean final-window profit",
            title="Profit vs task arrival rate")
    elif spec.kind == "scenario-profit":
        payload = _bar_by_scenario(spec, "on_time_profit",
                                   "normalized system profit",
                                   "Profit by scenario", normalize=True)
    elif spec.kind == "scenario-completion":
        payload = _bar_by_scenario(spec, "completion_rate", "completion rate",
                                   "Completion rate by scenario",
                                   normalize=False)
    else:  # pragma: no cover - guarded by FigureSpec
        raise ValueError(spec.kind)
    sidecar = Path(spec.output).with_suffix(
        Path(spec.output).suffix + ".json")
    sidecar.write_text(json.dumps(payload, indent=2, sort_keys=True))
    return payload
