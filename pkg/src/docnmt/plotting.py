"""Figures for training logs and the document-mode ablation grid.

Everything renders off-screen with the Agg backend, so this works on
headless machines and inside tests.
"""

from __future__ import annotations

import csv
from typing import Iterable, Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GLOBAL_AXIS = ("off", "avg")
LOCAL_AXIS = ("off", "avg", "rnn", "attn", "rnn+attn")

# fixed metadata keeps reruns byte-identical
_PNG_META = {"Software": None}


def write_tsv(path: str, rows: Sequence[Mapping], columns: Sequence[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c, "")) for c in columns])


def read_tsv(path: str) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [dict(r) for r in csv.DictReader(fh, delimiter="\t")]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def plot_training_curves(logs: Mapping[str, Iterable[Mapping]], path: str,
                         title: str = "training loss") -> None:
    """One loss-vs-step line per named log."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, rows in logs.items():
        rows = list(rows)
        ax.plot([int(r["step"]) for r in rows], [float(r["loss"]) for r in rows], label=name, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("label-smoothed cross-entropy")
    ax.set_title(title)
    if logs:
        ax.legend(fontsize=7, ncol=2)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)


def ablation_matrix(rows: Iterable[Mapping]) -> np.ndarray:
    """BLEU laid out as [global, local]; missing cells are NaN."""
    grid = np.full((len(GLOBAL_AXIS), len(LOCAL_AXIS)), np.nan)
    for r in rows:
        grid[GLOBAL_AXIS.index(r["global"]), LOCAL_AXIS.index(r["local"])] = float(r["bleu"])
    return grid


def plot_ablation(rows: Iterable[Mapping], path: str, title: str = "BLEU by document mode") -> None:
    grid = ablation_matrix(rows)
    fig, ax = plt.subplots(figsize=(7, 2.8))
    im = ax.imshow(grid, cmap="viridis", vmin=np.nanmin(grid) if np.isfinite(grid).any() else 0,
                   vmax=100, aspect="auto")
    ax.set_xticks(range(len(LOCAL_AXIS)), LOCAL_AXIS)
    ax.set_yticks(range(len(GLOBAL_AXIS)), GLOBAL_AXIS)
    ax.set_xlabel("local")
    ax.set_ylabel("global")
    for (i, j), v in np.ndenumerate(grid):
        ax.text(j, i, "-" if np.isnan(v) else f"{v:.2f}", ha="center", va="center",
                color="black" if np.isnan(v) or v >= 90 else "white", fontsize=9)
    fig.colorbar(im, ax=ax)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=_PNG_META)
    plt.close(fig)
