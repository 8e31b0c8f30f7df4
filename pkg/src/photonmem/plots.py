"""Figure rendering for the CLI report path.

Figures are written straight to files next to the delimited output; the
analysis itself never depends on them.  Uses the Agg backend so runs
work headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "apply_style",
    "save_curve_figure",
    "save_spectrum_figure",
    "save_decay_figure",
    "save_histogram_figure",
    "save_coupling_figure",
    "save_delay_analysis_figure",
]


def apply_style() -> None:
    plt.rcParams.update(
        {
            "figure.figsize": (6.4, 4.2),
            "figure.dpi": 140,
            "savefig.dpi": 140,
            "savefig.bbox": "tight",
            "axes.grid": True,
            "grid.alpha": 0.3,
            "legend.frameon": False,
            "font.size": 10,
        }
    )


def _finish(fig, path):
    fig.savefig(path)
    plt.close(fig)


def save_curve_figure(path, x, y, yerr=None, model=None, xlabel="", ylabel="", logx=False, logy=False):
    apply_style()
    fig, ax = plt.subplots()
    ax.errorbar(x, y, yerr=yerr, fmt="o", ms=4, capsize=2, label="data")
    if model is not None:
        ax.plot(x, model, "-", label="model")
        ax.legend()
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    _finish(fig, path)


def save_spectrum_figure(path, detunings, data_curves, model_curves, larmor_mhz):
    """data_curves / model_curves: mapping label -> y array."""
    apply_style()
    fig, ax = plt.subplots()
    for label, y in data_curves.items():
        ax.plot(detunings, y, "o", ms=3, label=label)
    for label, y in model_curves.items():
        ax.plot(detunings, y, "-", lw=1.2, label=label)
    for x0 in (-larmor_mhz, 0.0, larmor_mhz):
        ax.axvline(x0, color="gray", lw=0.6, alpha=0.5)
    ax.set_xlabel("filter cavity detuning (MHz)")
    ax.set_ylabel("counts per pulse")
    ax.legend()
    _finish(fig, path)


def save_decay_figure(path, delays_us, values, errs, fit, threshold_lines=()):
    apply_style()
    fig, ax = plt.subplots()
    ax.errorbar(delays_us, values, yerr=errs, fmt="o", ms=4, capsize=2, label="data")
    t = np.linspace(min(delays_us), max(delays_us), 400)
    ax.plot(t, fit(t), "-", label=f"fit: tau = {fit.tau_us:.1f} us")
    for level, label in threshold_lines:
        ax.axhline(level, ls="--", lw=0.8, label=label)
    ax.set_xlabel("write-read delay (us)")
    ax.set_ylabel("value")
    ax.legend()
    _finish(fig, path)


def save_histogram_figure(path, histograms, bin_us):
    """histograms: mapping label -> TagHistogram."""
    apply_style()
    fig, ax = plt.subplots()
    for label, h in histograms.items():
        centers = 0.5 * (h.bin_edges[:-1] + h.bin_edges[1:])
        ax.step(centers, h.rate, where="mid", label=label)
    ax.set_xlabel("time in read pulse (us)")
    ax.set_ylabel(f"counts / sequence / {bin_us:g} us")
    ax.legend()
    _finish(fig, path)


def save_coupling_figure(path, detunings, coupling_abs, minimum=None):
    apply_style()
    fig, ax = plt.subplots()
    ax.plot(detunings, coupling_abs, "-")
    if minimum is not None:
        ax.axvline(minimum.detuning_mhz, color="C3", ls="--", lw=1.0,
                   label=f"minimum at {minimum.detuning_mhz:.1f} MHz")
        ax.legend()
    ax.set_yscale("log")
    ax.set_xlabel("detuning (MHz)")
    ax.set_ylabel("|coupling| (arb.)")
    _finish(fig, path)


def save_delay_analysis_figure(path, blocks):
    """Per-delay statistics: blocks is a list of result dicts."""
    apply_style()
    stats = sorted({b["statistic"] for b in blocks})
    fig, axes = plt.subplots(len(stats), 1, sharex=True, figsize=(6.4, 2.2 * len(stats)))
    if len(stats) == 1:
        axes = [axes]
    for ax, stat in zip(axes, stats):
        rows = [b for b in blocks if b["statistic"] == stat]
        rows.sort(key=lambda b: b["delay_us"])
        x = [b["delay_us"] for b in rows]
        y = [b["value"] for b in rows]
        e = [b["std_err"] for b in rows]
        ax.errorbar(x, y, yerr=e, fmt="o-", ms=4, capsize=2)
        ax.set_ylabel(stat)
    axes[-1].set_xlabel("write-read delay (us)")
    _finish(fig, path)
