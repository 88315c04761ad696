"""Figures for evaluation and self-training reports (written to files, never shown)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed metadata keeps reruns byte-identical
_META = {"Software": None}


def plot_eval(result, path, title: str | None = None) -> None:
    names = ["EM", "unordered EM", "valid form"]
    values = [result.em, result.unordered_em, result.valid_form_rate]
    fig, ax = plt.subplots(figsize=(4.5, 3))
    bars = ax.bar(names, values, color=["#4c72b0", "#55a868", "#c44e52"])
    for b, v in zip(bars, values):
        ax.text(b.get_x() + b.get_width() / 2, v + 0.02, f"{v:.3f}", ha="center", fontsize=8)
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("fraction")
    ax.set_title(title or f"evaluation (n={result.n})")
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)


def plot_selftrain(reports, path) -> None:
    """Held-out unordered EM before/after each round, with silver/failed counts."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
    rounds = [r.round for r in reports]
    before = [r.metric_before or 0.0 for r in reports]
    after = [r.metric_after or 0.0 for r in reports]
    w = 0.35
    ax1.bar([x - w / 2 for x in rounds], before, w, label="before")
    ax1.bar([x + w / 2 for x in rounds], after, w, label="after")
    ax1.set_xticks(rounds)
    ax1.set_xlabel("round")
    ax1.set_ylabel("held-out unordered EM")
    ax1.set_ylim(0, 1)
    ax1.legend(frameon=False, fontsize=8)

    ax2.bar(rounds, [r.silver_count for r in reports], label="silver")
    ax2.bar(rounds, [r.failed_count for r in reports],
            bottom=[r.silver_count for r in reports], label="failed")
    ax2.set_xticks(rounds)
    ax2.set_xlabel("round")
    ax2.set_ylabel("utterances")
    ax2.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
