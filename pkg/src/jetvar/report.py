"""Report artifacts for the numeric checks: delimited data plus figures.

The gradient check writes its per-grid errors as CSV and, on request, a
log-log convergence figure rendered to a file; both live alongside the
command's normal output.
"""

from __future__ import annotations

import csv
from typing import Sequence


def write_convergence_csv(path: str, rows: Sequence[dict],
                          orders: Sequence[float]) -> None:
    """One row per grid size: nodes, relative error, local order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["nodes", "rel_error", "order_from_previous"])
        for i, row in enumerate(rows):
            order = "" if i == 0 else f"{orders[i - 1]:.6f}"
            writer.writerow([row["nodes"], f"{row['rel_error']:.12e}", order])


def write_convergence_figure(path: str, rows: Sequence[dict]) -> None:
    """Log-log error plot with a second-order reference slope."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    nodes = [row["nodes"] for row in rows]
    errors = [max(row["rel_error"], 1e-17) for row in rows]
    spacings = [1.0 / (n - 1) for n in nodes]

    fig, ax = plt.subplots(figsize=(5.0, 3.5))
    ax.loglog(spacings, errors, "o-", label="measured")
    anchor = errors[0] if errors[0] > 0 else 1.0
    ref = [anchor * (h / spacings[0]) ** 2 for h in spacings]
    ax.loglog(spacings, ref, "k--", linewidth=0.8, label="second order")
    ax.set_xlabel("grid spacing h")
    ax.set_ylabel("max relative gradient error")
    ax.legend(frameon=False, fontsize=8)
    ax.grid(True, which="both", linewidth=0.3, alpha=0.5)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
