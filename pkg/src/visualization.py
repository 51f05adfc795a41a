"""
Charts for harmonic power-flow results.

Bar charts of spectra per harmonic order, KPI error charts on a log scale
and timing plots. Figures are written as SVG with the non-interactive Agg
backend.
"""

import logging
import os
import re
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd

import matplotlib
matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "hpf"
import matplotlib.pyplot as plt  # noqa: E402

logger = logging.getLogger(__name__)


class SpectrumPlotter:
    """
    Writes spectrum, error and timing charts.

    Args:
        out_dir (str): Directory receiving the SVG files
        figsize: Figure size in inches
    """

    def __init__(self, out_dir: str = "plots", figsize: Tuple[int, int] = (10, 6)):
        self.out_dir = out_dir
        self.figsize = figsize

    def _sanitize_filename(self, s: str) -> str:
        s = re.sub(r'[^A-Za-z0-9_\-\. ]+', '', s)
        s = s.strip().replace(' ', '_')
        return s[:150]

    def _finalize_plot(self, fig, title: str, save_path: Optional[str] = None) -> str:
        path = save_path or os.path.join(self.out_dir, f"{self._sanitize_filename(title)}.svg")
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        fig.tight_layout()
        # fixed metadata keeps repeated runs byte-identical
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        logger.info("Plot saved to: %s", path)
        return path

    def plot_spectrum(self, hpf: pd.DataFrame, tds: Optional[pd.DataFrame], node: str,
                      quantity: str = "voltage", title: Optional[str] = None,
                      save_path: Optional[str] = None) -> str:
        """
        Magnitude bars per harmonic order for each phase of one node.

        The fundamental is left out so that the harmonics stay readable.
        """
        title = title or f"{quantity} spectrum {node}"
        fig, axes = plt.subplots(3, 1, figsize=self.figsize, sharex=True)
        fig.suptitle(title, fontsize=14, fontweight='bold')
        width = 0.4 if tds is not None else 0.8
        for ax, phase in zip(axes, "ABC"):
            rows = hpf[(hpf.node == node) & (hpf.phase == phase) & (hpf.h > 1)]
            ax.bar(rows.h - (width / 2 if tds is not None else 0.0), rows.mag_pu, width=width, label="HPF")
            if tds is not None:
                ref = tds[(tds.node == node) & (tds.phase == phase) & (tds.h > 1)]
                ax.bar(ref.h + width / 2, ref.mag_pu, width=width, label="TDS")
            ax.set_ylabel(f"|{phase}| (p.u.)")
            ax.grid(True, alpha=0.3)
        axes[0].legend(fontsize=9)
        axes[-1].set_xlabel("Harmonic order")
        return self._finalize_plot(fig, title, save_path)

    def plot_errors(self, kpi: pd.DataFrame, quantity: str = "voltage", title: Optional[str] = None,
                    save_path: Optional[str] = None) -> str:
        """Worst magnitude and phase error over nodes per harmonic order."""
        title = title or f"{quantity} errors"
        rows = kpi[kpi.quantity == quantity]
        worst = rows.groupby("h").agg(e_abs_pu=("e_abs_pu", "max"), e_arg_deg=("e_arg_deg", "max"))
        fig, (ax1, ax2) = plt.subplots(2, 1, figsize=self.figsize, sharex=True)
        fig.suptitle(title, fontsize=14, fontweight='bold')
        floor = np.finfo(float).tiny
        ax1.bar(worst.index, np.maximum(worst.e_abs_pu, floor), color="tab:blue")
        ax1.set_yscale("log")
        ax1.set_ylabel("e_abs (p.u.)")
        ax1.grid(True, alpha=0.3)
        ax2.bar(worst.index, np.maximum(worst.e_arg_deg.fillna(0.0), floor), color="tab:orange")
        ax2.set_yscale("log")
        ax2.set_ylabel("e_arg (deg)")
        ax2.set_xlabel("Harmonic order")
        ax2.grid(True, alpha=0.3)
        return self._finalize_plot(fig, title, save_path)

    def plot_timing(self, timing: pd.DataFrame, x: str = "h_max", groups: Optional[str] = None,
                    title: str = "HPF execution time", save_path: Optional[str] = None) -> str:
        """Mean execution time with one standard deviation, optionally per group."""
        fig, ax = plt.subplots(figsize=self.figsize)
        fig.suptitle(title, fontsize=14, fontweight='bold')
        sets: Sequence = [(None, timing)] if groups is None else list(timing.groupby(groups))
        for label, rows in sets:
            ax.errorbar(rows[x], rows.mean_s, yerr=rows.std_s, marker="o", capsize=3,
                        label=None if label is None else f"{groups} = {label}")
        ax.set_xlabel(x)
        ax.set_ylabel("time (s)")
        ax.grid(True, alpha=0.3)
        if groups is not None:
            ax.legend(fontsize=9)
        return self._finalize_plot(fig, title, save_path)
