"""Figure rendering for the report path; kept out of the data pipelines."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402


def save_nll_trace(nll: list[float], rel_change: list[float], out_path) -> str:
    """Objective and relative-change traces on twin log axes."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    ax.plot(range(len(nll)), nll, color="tab:blue", label="NLL")
    ax.set_xlabel("iteration")
    ax.set_ylabel("normalized NLL", color="tab:blue")
    if rel_change:
        ax2 = ax.twinx()
        ax2.semilogy(range(1, len(rel_change) + 1), rel_change,
                     color="tab:orange", label="max relative change")
        ax2.set_ylabel("max relative block change", color="tab:orange")
    ax.set_title("fit trace")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return str(out_path)


def save_metrics_bars(metrics: dict[str, float], out_path) -> str:
    """Bar chart of scalar evaluation metrics."""
    keys = [k for k, v in metrics.items() if isinstance(v, (int, float))]
    vals = [float(metrics[k]) for k in keys]
    fig, ax = plt.subplots(figsize=(max(5, 0.9 * len(keys)), 4))
    ax.bar(range(len(keys)), vals, color="tab:green")
    ax.set_xticks(range(len(keys)))
    ax.set_xticklabels(keys, rotation=45, ha="right")
    ax.set_title("evaluation metrics")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return str(out_path)
