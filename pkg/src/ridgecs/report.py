"""Metric-versus-K figures for sweep summaries."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

METRICS = {
    "nmse": "NMSE",
    "delta_deg": "average angular error (deg)",
    "pd_percent": "false detection rate (%)",
}


def _label(row) -> str:
    return f"{row['dict'].upper()}-{row['mode'].upper()}"


def plot_summary(rows: list[dict], out_dir) -> list[Path]:
    """One PNG per metric; panels are (phantom, b), curves are method x SNR.

    ``rows`` are summary rows as written by the sweep (``<metric>_mean`` and
    ``<metric>_std`` columns).
    """
    out_dir = Path(out_dir)
    panels = sorted({(r["phantom"], float(r["b"])) for r in rows})
    written = []
    for metric, ylabel in METRICS.items():
        if not panels:
            break
        fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.4),
                                 squeeze=False)
        for ax, (ph, b) in zip(axes[0], panels):
            curves = defaultdict(list)
            for r in rows:
                if r["phantom"] == ph and float(r["b"]) == b:
                    curves[(_label(r), r["snr_db"])].append(
                        (int(r["K"]), float(r[f"{metric}_mean"]), float(r[f"{metric}_std"])))
            for (label, snr), pts in sorted(curves.items()):
                pts.sort()
                ks, mean, std = zip(*pts)
                ax.errorbar(ks, mean, yerr=std, marker="o", ms=3, capsize=2,
                            label=f"{label}, {snr} dB")
            ax.set_title(f"{ph}, b={b:g}")
            ax.set_xlabel("K")
            ax.set_ylabel(ylabel)
            ax.grid(alpha=0.3)
        axes[0][-1].legend(fontsize=6, loc="best")
        fig.tight_layout()
        path = out_dir / f"{metric}.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
