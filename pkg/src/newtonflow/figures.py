"""Figure rendering for run reports: states, energy diagnostics, and the
rate fit, written as PNG files next to the delimited output."""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import EXPONENTIAL, FINITE_TIME, POLYNOMIAL, RateReport
from .flow import Trajectory

# pyplot is not thread safe; verify dispatches runs concurrently
_LOCK = threading.Lock()

_FIGSIZE = (6.0, 3.6)
_DPI = 140


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=_DPI, metadata={"Software": None})
    plt.close(fig)


def render_trajectory(path, traj: Trajectory, x_star: Optional[np.ndarray] = None) -> None:
    with _LOCK:
        fig, axes = plt.subplots(1, 2 if x_star is not None else 1,
                                 figsize=_FIGSIZE, squeeze=False)
        ax = axes[0][0]
        for i in range(traj.dimension):
            ax.plot(traj.times, traj.states[:, i], lw=1.0, label=f"x_{i + 1}")
        ax.set_xlabel("t")
        ax.set_ylabel("state")
        ax.legend(fontsize=8)
        if x_star is not None:
            dist = np.linalg.norm(traj.states - x_star[None, :], axis=1)
            ax2 = axes[0][1]
            pos = dist > 0
            ax2.semilogy(traj.times[pos], dist[pos], lw=1.0)
            ax2.set_xlabel("t")
            ax2.set_ylabel("distance to reference")
        _save(fig, path)


def render_energy(path, traj: Trajectory) -> None:
    with _LOCK:
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=_FIGSIZE)
        ax1.plot(traj.times, traj.energy, lw=1.0)
        ax1.set_xlabel("t")
        ax1.set_ylabel("energy")
        ax2.plot(traj.times, traj.integral_residuals, lw=1.0)
        ax2.set_xlabel("t")
        ax2.set_ylabel("integral residual")
        _save(fig, path)


def render_rate_fit(path, traj: Trajectory, x_star: np.ndarray, fit: RateReport) -> None:
    with _LOCK:
        dist = np.linalg.norm(traj.states - x_star[None, :], axis=1)
        fig, ax = plt.subplots(figsize=_FIGSIZE)
        pos = dist > 0
        if fit.regime == POLYNOMIAL:
            tpos = pos & (traj.times > 0)
            ax.loglog(traj.times[tpos], dist[tpos], lw=1.0, label="trajectory")
            if fit.exponent is not None and fit.window:
                tt = np.geomspace(max(fit.window[0], 1e-12), fit.window[1], 64)
                ax.loglog(tt, fit.prefactor * tt**fit.exponent, "--", lw=1.0,
                          label=f"fit t^{fit.exponent:.3f}")
        else:
            ax.semilogy(traj.times[pos], dist[pos], lw=1.0, label="trajectory")
            if fit.regime == EXPONENTIAL and fit.alpha is not None and fit.window:
                tt = np.linspace(fit.window[0], fit.window[1], 64)
                ax.semilogy(tt, fit.prefactor * np.exp(-fit.alpha * tt), "--", lw=1.0,
                            label=f"fit exp(-{fit.alpha:.3f} t)")
            elif fit.regime == FINITE_TIME and fit.t_star is not None:
                ax.axvline(fit.t_star, color="k", ls=":", lw=1.0,
                           label=f"settle t={fit.t_star:.3f}")
        ax.set_xlabel("t")
        ax.set_ylabel("distance to reference")
        ax.legend(fontsize=8)
        _save(fig, path)
