"""Matplotlib figures written next to the CSV reports."""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.2),
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
}

# no software/date stamps so reruns write identical files
_PNG_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_PNG_META)
    plt.close(fig)
    return path


def plot_auth_timing(rows: Sequence[dict], path: str | Path) -> Path:
    """Per-query authentication time against group size, bloom vs naive scan."""
    sizes = [r["group_size"] for r in rows]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(sizes, [r["bloom_ns"] / 1000 for r in rows], "o-", label="bloom filter")
        ax.plot(sizes, [r["naive_ns"] / 1000 for r in rows], "s--", label="naive list scan")
        ax.set_xlabel("pseudonyms in group")
        ax.set_ylabel("median time per query (µs)")
        ax.legend(frameon=False)
        return _save(fig, Path(path))


def plot_aggregates(records, group_id: str, path: str | Path) -> Path:
    rows = [r for r in records if r.group_id == group_id]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot([r.slot for r in rows], [r.ground_truth for r in rows], "-", color="0.6", label="ground truth")
        acc = [r for r in rows if r.aggregate is not None]
        ax.plot([r.slot for r in acc], [r.aggregate for r in acc], "o", ms=3, label="chain aggregate")
        rej = [r for r in rows if r.block == "rejected"]
        if rej:
            ax.plot([r.slot for r in rej], [r.ground_truth for r in rej], "x", color="C3", label="block rejected")
        ax.set_xlabel("slot")
        ax.set_ylabel("group consumption (Wh)")
        ax.set_title(f"group {group_id}")
        ax.legend(frameon=False)
        return _save(fig, Path(path))


def plot_miner_frequency(counts: dict[str, int], group_id: str, path: str | Path) -> Path:
    users = sorted(counts)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.bar(range(len(users)), [counts[u] for u in users], color="C0")
        ax.set_xlabel("meter (index)")
        ax.set_ylabel("slots mined")
        ax.set_title(f"miner selection, group {group_id}")
        return _save(fig, Path(path))
