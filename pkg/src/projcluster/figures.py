"""Report figures rendered to PNG files next to the delimited output.

All rendering uses the Agg backend so it works headless.  Figure
emission is best-effort decoration of a report run; the delimited
files remain the canonical output.
"""

from __future__ import annotations

import os
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from projcluster.metrics import GroundTruthSet, SessionReport, pr_curve

_DPI = 150


def _finish(fig, path: str) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def save_evaluation_figures(
    reports: Sequence[SessionReport],
    out_dir: str | os.PathLike,
    pr_points: tuple[list[float], list[float]] | None = None,
) -> list[str]:
    """Bar charts of counts and median IoU per session, plus an
    optional precision-recall curve. Returns the written paths."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    labels = [r.session_id for r in reports]
    xs = range(len(reports))

    fig, ax = plt.subplots(figsize=(7, 4))
    width = 0.38
    ax.bar([x - width / 2 for x in xs], [r.baseline_count for r in reports],
           width, label="detector")
    ax.bar([x + width / 2 for x in xs], [r.ours_count for r in reports],
           width, label="regions")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylabel("count")
    ax.set_title("Raw detections vs. aggregated regions")
    ax.legend()
    written.append(_finish(fig, os.path.join(out_dir, "counts.png")))

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar([x - width / 2 for x in xs], [r.median_iou_baseline for r in reports],
           width, label="detector")
    ax.bar([x + width / 2 for x in xs], [r.median_iou_ours for r in reports],
           width, label="regions")
    ax.set_xticks(list(xs))
    ax.set_xticklabels(labels, rotation=30, ha="right")
    ax.set_ylim(0, 1)
    ax.set_ylabel("median matched IoU")
    ax.set_title("Localization quality")
    ax.legend()
    written.append(_finish(fig, os.path.join(out_dir, "median_iou.png")))

    if pr_points is not None:
        recalls, precisions = pr_points
        fig, ax = plt.subplots(figsize=(5, 5))
        ax.plot(recalls, precisions, drawstyle="steps-post")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1.05)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_title("Precision-recall at IoU 0.5")
        written.append(_finish(fig, os.path.join(out_dir, "pr_curve.png")))
    return written


def save_search_figures(
    results: Sequence[tuple[str, Mapping[float, float], float]],
    out_dir: str | os.PathLike,
) -> list[str]:
    """One score-vs-candidate curve per search, optimum marked."""
    out_dir = os.fspath(out_dir)
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for kind, scores, chosen in results:
        cands = sorted(scores)
        vals = [scores[c] for c in cands]
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(cands, vals, marker="o")
        ax.axvline(chosen, linestyle="--", linewidth=1)
        if kind in ("shear", "rotate", "translate"):
            ax.set_xscale("log", base=2)
            unit = "px" if kind == "translate" else "deg"
            ax.set_xlabel(f"max magnitude ({unit})")
        else:
            ax.set_xlabel("application probability")
        ax.set_ylabel("oracle score")
        ax.set_title(f"{kind} search (chosen: {chosen:g})")
        written.append(_finish(fig, os.path.join(out_dir, f"search_{kind}.png")))
    return written


def pr_points_for_report(preds, gt: GroundTruthSet):
    """PR staircase for the figure; None when it is undefined."""
    try:
        return pr_curve(preds, gt, 0.5)
    except Exception:
        return None
