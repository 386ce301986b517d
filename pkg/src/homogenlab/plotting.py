"""PNG figures for sweep and drag reports (non-interactive Agg backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps repeated renders byte-identical
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)


def plot_convergence(report, path):
    """Errors and measure gaps against eps on log-log axes."""
    eps = report.column("eps")
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for name, label in (("err_theta_L2", "temperature L2"), ("err_u_L2", "velocity L2")):
        vals = report.column(name)
        if any(v > 0 for v in vals):
            ax1.loglog(eps, vals, "o-", label=label)
    ax1.set_xlabel("eps")
    ax1.set_ylabel("micro - macro error")
    ax1.legend()
    ax1.invert_xaxis()
    for j, label in enumerate(("1", "product sine", "gaussian"), 1):
        vals = report.column(f"gap_phi{j}")
        if any(v > 0 for v in vals):
            ax2.loglog(eps, vals, "s-", label=f"phi = {label}")
    ax2.set_xlabel("eps")
    ax2.set_ylabel("measure gap")
    ax2.legend()
    ax2.invert_xaxis()
    _save(fig, path)


def plot_drag(drag_rows, energy_rows, path):
    """Drag ratio and corrector energy ratio against the confinement ratio.

    ``drag_rows`` and ``energy_rows`` hold ``(R / r, ratio)`` pairs.
    """
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    if drag_rows:
        x, y = zip(*drag_rows)
        ax1.semilogx(x, y, "o-", label="computed")
    ax1.axhline(1.0, color="k", lw=0.8, ls="--", label="unbounded fluid")
    ax1.set_xlabel("R / r")
    ax1.set_ylabel("drag / (6 pi r)")
    ax1.legend()
    if energy_rows:
        x, y = zip(*energy_rows)
        ax2.semilogx(x, y, "o-")
    ax2.axhline(1.0, color="k", lw=0.8, ls="--")
    ax2.set_xlabel("R / r")
    ax2.set_ylabel("corrector energy / capacity")
    _save(fig, path)
