"""Report figures written next to the CSV output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 5.0
params = {
    "figure.figsize": (fig_width, fig_width * golden_mean),
    "figure.dpi": 120,
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "axes.spines.top": False,
    "axes.spines.right": False,
}
colors = {"pixel": "#2b8cbe", "qif": "#e34a33"}


def _color(method: str) -> str:
    return colors["qif"] if method.startswith("qif") else colors["pixel"]


def plot_error_curves(reports, path) -> None:
    """FRR against FAR over the full threshold sweep, EER point marked.

    Each report contributes the curve of its largest database size.
    """
    with plt.rc_context(params):
        fig, ax = plt.subplots(figsize=(fig_width * 0.8, fig_width * 0.8))
        for rep in reports:
            if not rep.curves:
                continue
            n = max(rep.curves)
            curve = rep.curves[n]
            c = _color(rep.method)
            ax.step(curve.far, curve.frr, where="post", color=c, label=f"{rep.method} (n={n})")
            ax.plot([rep.eer], [rep.eer], "o", color=c, markersize=4)
            ax.annotate(f"EER {rep.eer:.3f}", (rep.eer, rep.eer), xytext=(6, 4),
                        textcoords="offset points", fontsize=7, color=c)
        ax.plot([0, 1], [0, 1], color="0.7", linewidth=0.6, linestyle=":")
        ax.set_xlabel("false acceptance rate")
        ax.set_ylabel("false rejection rate")
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_rates_by_size(reports, path) -> None:
    """FAR and FRR per database size, one line pair per method."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        for rep in reports:
            n = [r.n_images for r in rep.rows]
            c = _color(rep.method)
            ax.plot(n, [r.far for r in rep.rows], "o-", color=c, label=f"{rep.method} FAR")
            ax.plot(n, [r.frr for r in rep.rows], "s--", color=c, label=f"{rep.method} FRR")
        ax.set_xlabel("images in database")
        ax.set_ylabel("rate")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def plot_timing(table, path) -> None:
    """Grouped bars of matching time per database size."""
    with plt.rc_context(params):
        fig, ax = plt.subplots()
        n = np.array([r.n_images for r in table.rows])
        x = np.arange(len(n))
        ax.bar(x - 0.2, [r.pixel_seconds for r in table.rows], 0.4, color=colors["pixel"], label="pixel")
        ax.bar(x + 0.2, [r.qif_seconds for r in table.rows], 0.4, color=colors["qif"], label="qif")
        for xi, r in zip(x, table.rows):
            ax.annotate(f"{r.speedup:.1f}x", (xi, max(r.pixel_seconds, r.qif_seconds)),
                        ha="center", va="bottom", fontsize=7)
        ax.set_xticks(x)
        ax.set_xticklabels([str(v) for v in n])
        ax.set_xlabel("images in database")
        ax.set_ylabel("matching time (s)")
        ax.legend(frameon=False)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
