"""Figure rendering for the report paths (non-interactive backend).

Every CLI command that writes delimited output can drop a matching figure
next to it; these helpers keep the styling in one place.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def singular_value_figure(report, path):
    """Relative decay of both stacked spectra on a log scale."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for sigma, label, marker in (
        (report.sigma_horizontal, "row stack", "o"),
        (report.sigma_vertical, "column stack", "x"),
    ):
        sigma = np.asarray(sigma)
        if sigma.size:
            ax.semilogy(np.arange(1, sigma.size + 1), sigma / sigma[0],
                        marker=marker, ms=3, lw=0.8, label=label)
    ax.axvline(report.order, color="gray", ls=":", lw=0.8)
    ax.set_xlabel("index")
    ax.set_ylabel(r"$\sigma_i / \sigma_1$")
    ax.legend(frameon=False)
    return _finish(fig, path)


def trajectory_figure(traj, path, title=None):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for ch in range(traj.y.shape[1]):
        ax.plot(traj.t, traj.y[:, ch], lw=1.0, label=f"y{ch + 1}")
    ax.set_xlabel("t")
    ax.set_ylabel("output")
    if title:
        ax.set_title(title)
    if traj.y.shape[1] > 1:
        ax.legend(frameon=False)
    return _finish(fig, path)


def compare_figure(t, y, y_rom, path):
    """Transient response of both models plus the pointwise error."""
    fig, (ax0, ax1) = plt.subplots(2, 1, figsize=(6, 5), sharex=True)
    for ch in range(y.shape[1]):
        ax0.plot(t, y[:, ch], lw=1.0, label=f"full y{ch + 1}")
        ax0.plot(t, y_rom[:, ch], lw=1.0, ls="--", label=f"reduced y{ch + 1}")
    ax0.set_ylabel("output")
    ax0.legend(frameon=False, fontsize=8)
    err = np.linalg.norm(y - y_rom, axis=1)
    ax1.semilogy(t, np.maximum(err, 1e-300), lw=1.0)
    ax1.set_xlabel("t")
    ax1.set_ylabel("error")
    return _finish(fig, path)


def sweep_figure(sweep, path):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for pv, row in zip(sweep.params, sweep.errors):
        label = ", ".join(f"{v:g}" for v in pv)
        ax.semilogy(sweep.t, np.maximum(row, 1e-300), lw=1.0, label=f"p = {label}")
    ax.set_xlabel("t")
    ax.set_ylabel("normalized error")
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path)


def tf_sweep_figure(freqs, series, path):
    """Log-log magnitude sweep; ``series`` maps labels to value arrays."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, vals in series.items():
        mags = np.array([np.abs(v).max() for v in vals])
        ax.loglog(freqs, np.maximum(mags, 1e-300), lw=1.0, label=label)
    ax.set_xlabel("frequency")
    ax.set_ylabel("max |entry|")
    ax.legend(frameon=False)
    return _finish(fig, path)
