"""Figures written next to the delimited output."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import matplotlib.tri as mtri  # noqa: E402
import numpy as np  # noqa: E402


def plot_convergence(path, histories):
    """Residual norm against Newton iteration; ``histories`` maps label -> history."""
    fig, ax = plt.subplots(figsize=(5, 3.6))
    for label, hist in histories.items():
        res = hist.residuals
        ax.semilogy(np.arange(len(res)), res, marker="o", ms=4, label=label)
    ax.set_xlabel("Newton iteration")
    ax.set_ylabel(r"$\|F(u^k)\|_2$")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(frameon=False)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_field(path, mesh, values, title):
    """Nodal field on the vertex triangulation."""
    tri = mtri.Triangulation(mesh.nodes[:, 0], mesh.nodes[:, 1], mesh.elements[:, :3])
    span = np.ptp(mesh.nodes, axis=0)
    fig, ax = plt.subplots(figsize=(6, max(2.0, 6 * span[1] / max(span[0], 1e-12))))
    pc = ax.tripcolor(tri, values, shading="gouraud", cmap="viridis")
    fig.colorbar(pc, ax=ax, shrink=0.8)
    ax.set_aspect("equal")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_alpha(path, report):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    p = np.asarray(report.p_values, dtype=float)
    for name, fit in report.fits.items():
        ax.plot(p, fit.ratios, "o", label=f"{name}: alpha = {fit.alpha:.2f}")
        ax.plot(p, fit.beta + fit.alpha * p, "-", alpha=0.6)
    ax.set_xlabel("directions p")
    ax.set_ylabel("cost(AD) / cost(residual)")
    ax.legend(frameon=False)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
