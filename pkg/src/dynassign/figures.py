"""Report figures rendered straight to files (headless Agg backend).

Two charts accompany the delimited plot table:
- comparison: mean outcome score per configured mechanism, with replication
  error bars and the optimal/greedy baselines as reference lines;
- loss accounting: the min-risk mean score stacked with its mean expected
  loss next to the optimal mean, visualizing how far the identity
  optimal ~= min-risk + expected loss holds on this cohort.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .backtest import BacktestResult, _as_results, plot_rows

_MINRISK_COLOR = "#4878a8"
_LOSS_COLOR = "#c94f4f"


def render_comparison(results, path) -> Path:
    reps = _as_results(results)
    rows = plot_rows(reps)
    optimal = float(np.mean([r.optimal.mean_score for r in reps]))
    greedy = float(np.mean([r.greedy.mean_score for r in reps]))

    fig, ax = plt.subplots(figsize=(7.0, 1.2 + 0.5 * max(len(rows), 1)))
    if rows:
        labels = [f"{name} {param}".strip() for name, param, _, _ in rows]
        means = [mean for _, _, mean, _ in rows]
        halves = [half for _, _, _, half in rows]
        y = np.arange(len(rows))
        ax.barh(y, means, xerr=halves, color=_MINRISK_COLOR, height=0.6, capsize=3)
        ax.set_yticks(y)
        ax.set_yticklabels(labels)
        ax.invert_yaxis()
    ax.axvline(optimal, color="black", linestyle="--", linewidth=1, label="optimal")
    ax.axvline(greedy, color="gray", linestyle=":", linewidth=1, label="greedy")
    ax.set_xlabel("mean outcome score")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_loss_accounting(results, path) -> Path:
    from .backtest import loss_accounting_report

    reps = _as_results(results)
    reports = [loss_accounting_report(r) for r in reps]
    minrisk = float(np.mean([r["minrisk_mean_score"] for r in reports]))
    loss = float(np.mean([r["mean_expected_loss"] for r in reports]))
    optimal = float(np.mean([r["optimal_mean_score"] for r in reports]))

    fig, ax = plt.subplots(figsize=(4.5, 3.5))
    ax.bar([0], [minrisk], color=_MINRISK_COLOR, label="min-risk mean score")
    ax.bar([0], [loss], bottom=[minrisk], color=_LOSS_COLOR, label="mean expected loss")
    ax.bar([1], [optimal], color="black", alpha=0.75, label="optimal mean score")
    ax.set_xticks([0, 1])
    ax.set_xticklabels(["min-risk + expected loss", "optimal"])
    ax.set_ylabel("mean outcome score")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


def render_report_figures(results, outdir) -> list[Path]:
    """Write every figure the results support; returns the paths written."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = [render_comparison(results, outdir / "comparison.png")]
    reps = _as_results(results)
    if all(any(r.kind == "min_risk" for r in res.runs) for res in reps):
        written.append(render_loss_accounting(results, outdir / "loss_accounting.png"))
    return written
