"""Figure rendering for CLI reports (files only, Agg backend)."""

from __future__ import annotations

from contextlib import contextmanager
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

STYLE = {
    "figure.dpi": 120,
    "savefig.dpi": 150,
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "legend.frameon": False,
    "lines.linewidth": 1.4,
}
COEFF_COLORS = {"IX": "k", "IY": "tab:red", "IZ": "tab:blue", "ZX": "k", "ZY": "tab:red", "ZZ": "tab:blue"}
CONTROL_COLORS = ("tab:blue", "tab:red")


@contextmanager
def _figure(path, nrows=1, ncols=1, size=(6.0, 4.0), **kw):
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(nrows, ncols, figsize=size, **kw)
        try:
            yield fig, axes
            fig.tight_layout()
            Path(path).parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(path, metadata={"Software": None})
        finally:
            plt.close(fig)


def plot_rabi(ds, rtrace, path) -> Path:
    """Six conditional Rabi traces plus ||R||."""
    with _figure(path, 4, 1, (6.0, 7.0), sharex=True) as (_, axes):
        for ax, axis in zip(axes[:3], ("x", "y", "z")):
            for c in (0, 1):
                ax.plot(ds.durations, ds.traces[(c, axis)], ".-", ms=3, color=CONTROL_COLORS[c],
                        label=f"control |{c}>")
            ax.set_ylabel(f"<{axis.upper()}>")
            ax.set_ylim(-1.05, 1.05)
        axes[0].legend(loc="upper right", ncol=2)
        axes[3].plot(ds.durations, rtrace, ".-", ms=3, color="tab:purple")
        axes[3].set_ylabel("||R||")
        axes[3].set_ylim(-0.05, 1.05)
        axes[3].set_xlabel("pulse width (ns)")
    return Path(path)


def plot_coefficients(x, measured: dict, path, xlabel: str, theory: dict | None = None,
                      theory_x=None) -> Path:
    """Coefficient curves: I-type dashed, Z-type solid; optional theory lines."""
    x = np.asarray(x)
    with _figure(path) as (_, ax):
        for k, color in COEFF_COLORS.items():
            if k in measured:
                style = "--o" if k.startswith("I") else "-o"
                ax.plot(x, measured[k], style, ms=3, color=color, label=k, mfc="none" if k.startswith("I") else color)
        if theory:
            tx = x if theory_x is None else np.asarray(theory_x)
            for k, vals in theory.items():
                ax.plot(tx, vals, ":", color="tab:green" if k == "ZZ" else "m", label=f"{k} theory")
        ax.axhline(0, color="0.5", lw=0.6)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("rate (MHz)")
        ax.legend(ncol=3, fontsize=7)
    return Path(path)


def plot_rb(results: dict, path) -> Path:
    """Survival decays with fitted curves, one entry per label."""
    with _figure(path) as (_, ax):
        for label, res in results.items():
            m = np.asarray(res.lengths)
            ax.errorbar(m, res.mean, yerr=res.stderr, fmt="o", ms=3, capsize=2, label=f"{label} (alpha={res.alpha:.4f})")
            mm = np.linspace(0, m.max(), 200)
            ax.plot(mm, res.A * res.alpha**mm + res.B, "-", lw=1)
        ax.set_xlabel("sequence length (Cliffords)")
        ax.set_ylabel("|00> survival")
        ax.legend()
    return Path(path)


def plot_trajectory(times, bloch, path) -> Path:
    """Target Bloch components during the echoed gate for both control states."""
    with _figure(path, 3, 1, (6.0, 6.0), sharex=True) as (_, axes):
        for i, (ax, axis) in enumerate(zip(axes, "XYZ")):
            for c in (0, 1):
                ax.plot(times, bloch[c, :, i], color=CONTROL_COLORS[c], label=f"control |{c}>")
            ax.set_ylabel(f"<{axis}>")
            ax.set_ylim(-1.05, 1.05)
        axes[0].legend(ncol=2)
        axes[-1].set_xlabel("time (ns)")
    return Path(path)
