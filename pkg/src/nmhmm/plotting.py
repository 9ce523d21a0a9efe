"""Figures rendered next to the tabular outputs.

Uses the object-oriented matplotlib API on an Agg canvas, so nothing
touches pyplot global state and figures can be drawn from worker threads.
"""

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .trackio import present_runs

CALL_COLOR = "#d62728"


def _new(width=7.0, height=4.0):
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig, fig.add_subplot(1, 1, 1)


def plot_histogram(table, path, title=None):
    """Observed count frequencies as bars, with Poisson and NB-mixture pmfs overlaid."""
    fig, ax = _new()
    ks = table.counts
    ax.bar(ks, table.observed, width=0.8, color="0.2", label="observed")
    ax.plot(ks, table.poisson, "o-", color=CALL_COLOR, ms=3, lw=1,
            label=f"Poisson (chi2={table.chi2_poisson:.3g})")
    ax.plot(ks, table.mixture, "s-", color="#1f77b4", ms=3, lw=1,
            label=f"NB mixture (chi2={table.chi2_mixture:.3g})")
    ax.set_xlabel("reads per window")
    ax.set_ylabel("fraction of windows")
    ax.set_title(title or f"n={table.n}, mean={table.mean:.3g}, var={table.variance:.3g}")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    return path


def plot_track(counts, result, path, column=0, max_windows=5000):
    """One profile along the genome with present calls shaded in red.

    Only the first ``max_windows`` windows are drawn.
    """
    k = min(counts.n, max_windows)
    fig, ax = _new(10.0, 3.0)
    x = np.arange(k)
    ax.bar(x, counts.counts[:k, column], width=1.0, color="0.3", lw=0)
    mask = np.asarray(result.present_mask[:k])
    for _, s, e in present_runs(np.zeros(k, dtype=int), x, x + 1, mask):
        ax.axvspan(s - 0.5, e - 0.5, color=CALL_COLOR, alpha=0.3, lw=0)
    ax.set_xlim(-0.5, k - 0.5)
    ax.set_xlabel(f"window ({counts.chroms[0]}:{counts.starts[0]} onward)")
    ax.set_ylabel(counts.names[column])
    status = "accepted" if result.accepted else "rejected"
    ax.set_title(f"QC score {result.qc_score:.3f} ({status})")
    fig.tight_layout()
    fig.savefig(path)
    return path
