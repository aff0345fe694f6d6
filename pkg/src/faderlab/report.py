"""Delimited outputs and figures for sweeps, training logs, and fidelity."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import numpy as np  # noqa: E402

from .evaluation import FidelityResult, SweepResult  # noqa: E402


def write_sweep_csv(path: str | Path, result: SweepResult) -> None:
    """Per-sample sweep rows: target, measured, sample_index."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["target", "measured", "sample_index"])
        for target, measured, sample_index in result.rows:
            writer.writerow([f"{target:.8g}", f"{measured:.8g}", sample_index])


def render_sweep_figure(path: str | Path, result: SweepResult) -> None:
    """Regression plot: per-sample scatter, per-target means, identity line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(5, 5))
    targets = [r[0] for r in result.rows]
    measured = [r[1] for r in result.rows]
    ax.scatter(targets, measured, s=8, alpha=0.35, label="samples", color="#3566a8")
    ok = ~np.isnan(result.measured)
    ax.plot(result.targets[ok], result.measured[ok], "-o", ms=3.5,
            color="#c24f38", label="per-target mean")
    lo = min(min(targets, default=0.0), 0.0)
    hi = max(max(targets, default=1.0), max(measured, default=1.0))
    ax.plot([lo, hi], [lo, hi], "--", color="gray", lw=1, label="identity")
    ax.set_xlabel(f"target {result.attribute}")
    ax.set_ylabel(f"measured {result.attribute}")
    ax.set_title(f"{result.attribute}: PCC = {result.pcc:.4f}")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_training_csv(path: str | Path, log: list[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if not log:
        path.write_text("")
        return
    fields = list(log[0].keys())
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(log)


def render_training_curve(
    path: str | Path, log: list[dict], fields: tuple[str, ...] = ("loss",)
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    iters = [row["iter"] for row in log]
    for name in fields:
        if log and name in log[0]:
            ax.plot(iters, [row[name] for row in log], label=name)
    ax.set_xlabel("iteration")
    ax.set_yscale("log")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_fidelity_figure(path: str | Path, result: FidelityResult, label: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig, ax = plt.subplots(figsize=(4, 4))
    ax.bar(["conditional", "unconditional"], [result.conditional, result.unconditional],
           color=["#3566a8", "#999999"])
    ax.set_ylabel("attribute-feature Fréchet distance")
    ax.set_title(label)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
