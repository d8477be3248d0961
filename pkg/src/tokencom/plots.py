"""Static charts from experiment CSV files."""

from __future__ import annotations

import csv
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["load_aggregate_csv", "plot_metric_vs_snr", "render_all"]


def load_aggregate_csv(paths) -> list[dict]:
    rows: list[dict] = []
    for path in paths:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                rows.append(row)
    return rows


def _series(rows, metric):
    by_strategy = defaultdict(list)
    for row in rows:
        value = row.get(metric, "")
        if value == "":
            continue
        by_strategy[row["strategy"]].append((float(row["snr_db"]), float(value)))
    for points in by_strategy.values():
        points.sort()
    return by_strategy


def plot_metric_vs_snr(rows, metric: str, ylabel: str, out_path: Path) -> Path:
    series = _series(rows, metric)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for strategy, points in sorted(series.items()):
        snrs = [p[0] for p in points]
        vals = [p[1] for p in points]
        ax.plot(snrs, vals, marker="o", label=strategy)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel(ylabel)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)
    return out_path


def render_all(aggregate_paths, out_dir: str | Path) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = load_aggregate_csv(aggregate_paths)
    made = []
    for metric, ylabel, name in [
        ("token_acc_mean", "mean token accuracy", "token_accuracy.png"),
        ("r_mean", "mean masking ratio", "masking_ratio.png"),
        ("mean_iters_mean", "mean refinements per token", "iterations.png"),
        ("bag_cos_mean", "mean bag-of-tokens cosine", "bag_cosine.png"),
        ("sim_mean", "mean embedding cosine", "sim.png"),
    ]:
        if any(row.get(metric, "") != "" for row in rows):
            made.append(plot_metric_vs_snr(rows, metric, ylabel, out_dir / name))
    return made
