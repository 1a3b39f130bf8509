"""Figure rendering for sweep, equivariance and benchmark outputs.

Everything goes through the Agg backend and is written as SVG.  The hash
salt and date metadata are pinned so that identical runs produce
byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

_SVG_RC = {"svg.hashsalt": "ctsr", "svg.fonttype": "none"}


def _save(fig, path) -> None:
    try:
        fig.savefig(path, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)


def render_sweep(points, front, knee, path) -> None:
    """Sparsity/residual tradeoff: all sweep points, the non-dominated
    front, and the knee suggestion."""
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(6.0, 4.0))
        floor = 1e-300
        ax.scatter([p.sparsity for p in points],
                   [max(p.residual, floor) for p in points],
                   s=18, color="0.65", zorder=1, label="sweep")
        fs = sorted(front, key=lambda p: p.sparsity)
        ax.plot([p.sparsity for p in fs],
                [max(p.residual, floor) for p in fs],
                "o-", color="C0", zorder=2, label="front")
        if knee is not None:
            ax.plot([knee.sparsity], [max(knee.residual, floor)], "*",
                    color="C3", markersize=15, zorder=3, label="knee")
        ax.set_yscale("log")
        ax.set_xlabel("retained terms")
        ax.set_ylabel("residual norm")
        ax.legend(loc="upper right", frameon=False)
        fig.tight_layout()
        _save(fig, path)


def render_equivariance(rows, path) -> None:
    """Heatmap of log10 deviation, candidates x transforms."""
    terms = list(dict.fromkeys(r["term"] for r in rows))
    transforms = list(dict.fromkeys(r["transform"] for r in rows))
    cell = {(r["term"], r["transform"]): r["deviation"] for r in rows}
    grid = np.array([[np.log10(max(cell[(t, name)], 1e-300))
                      for name in transforms] for t in terms])
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(
            figsize=(max(4.0, 0.3 * len(transforms) + 2.0),
                     max(3.0, 0.22 * len(terms) + 1.5)))
        im = ax.imshow(grid, aspect="auto", cmap="viridis")
        ax.set_xticks(range(len(transforms)))
        ax.set_xticklabels(transforms, rotation=90, fontsize=6)
        ax.set_yticks(range(len(terms)))
        ax.set_yticklabels(terms, fontsize=6)
        fig.colorbar(im, ax=ax, label="log10 deviation")
        fig.tight_layout()
        _save(fig, path)


def render_bench_errors(errors_by_seed: dict[int, float], path) -> None:
    """Coefficient-error distribution over sampling seeds."""
    seeds = sorted(errors_by_seed)
    values = [errors_by_seed[s] for s in seeds]
    with plt.rc_context(_SVG_RC):
        fig, (ax0, ax1) = plt.subplots(
            1, 2, figsize=(7.0, 3.5), width_ratios=(1, 3))
        ax0.boxplot([values], tick_labels=["tensor"])
        ax0.set_ylabel("coefficient error [%]")
        ax1.plot(seeds, values, "o-", color="C0")
        ax1.set_xlabel("sampling seed")
        ax1.set_ylabel("coefficient error [%]")
        fig.tight_layout()
        _save(fig, path)
