"""Run reporting: convergence CSV, JSON summary, and a history figure.

The CSV mirrors the in-memory convergence log one row per penalty
iteration.  Floats are written with ``repr`` so the files round-trip
exactly and identical runs produce byte-identical output.
"""

from __future__ import annotations

import csv
import json

import numpy as np

from .distortion import DistortionIntegrals
from .mesh import HighOrderMesh
from .optimizer import ConvergenceLog

CSV_COLUMNS = (
    "degree",
    "iteration",
    "penalty",
    "constraint_norm",
    "gradient_norm",
    "forcing",
    "newton_iterations",
    "linear_outer",
    "linear_inner",
)


def write_convergence_csv(log: ConvergenceLog, path) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in log.rows:
            writer.writerow([
                row.degree,
                row.iteration,
                repr(row.penalty),
                repr(row.constraint_norm),
                repr(row.gradient_norm),
                repr(row.forcing),
                row.newton_iterations,
                row.linear_outer,
                row.linear_inner,
            ])


def run_summary(mesh: HighOrderMesh, log: ConvergenceLog,
                wall_time: float) -> dict:
    """Final state of a curving run as a JSON-ready dict."""
    quality = DistortionIntegrals(mesh).element_quality()
    outer, inner = log.total_linear()
    per_degree = {}
    for row in log.rows:
        per_degree[str(row.degree)] = per_degree.get(str(row.degree), 0) + 1
    return {
        "degree": mesh.degree,
        "elements": mesh.num_elements,
        "nodes": mesh.num_nodes,
        "final_constraint_norm": log.final_constraint_norm,
        "final_gradient_norm": log.final_gradient_norm,
        "quality_min": float(quality.min()),
        "quality_max": float(quality.max()),
        "wall_time_seconds": wall_time,
        "iterations": {
            "penalty_per_degree": per_degree,
            "penalty_total": len(log.rows),
            "newton_total": sum(r.newton_iterations for r in log.rows),
            "linear_outer": outer,
            "linear_inner": inner,
        },
    }


def write_summary_json(summary: dict, path) -> None:
    with open(path, "w") as handle:
        json.dump(summary, handle, indent=2, sort_keys=True)
        handle.write("\n")


def write_history_figure(log: ConvergenceLog, eps_star: float, path) -> None:
    """Boundary error and gradient norm against the penalty iterations,
    with degree changes marked."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    steps = np.arange(len(log.rows))
    eps = np.array([r.constraint_norm for r in log.rows])
    grad = np.array([r.gradient_norm for r in log.rows])

    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    positive = eps > 0
    ax.semilogy(steps[positive], eps[positive], "o-", label="boundary error")
    positive = grad > 0
    ax.semilogy(steps[positive], grad[positive], "s--",
                label="gradient inf-norm")
    ax.axhline(eps_star, color="k", linewidth=0.8, linestyle=":",
               label="error tolerance")
    last_degree = None
    for step, row in zip(steps, log.rows):
        if row.degree != last_degree:
            ax.axvline(step - 0.5, color="gray", linewidth=0.6)
            ax.text(step, ax.get_ylim()[1], f" degree {row.degree}",
                    va="top", fontsize=8, color="gray")
            last_degree = row.degree
    ax.set_xlabel("penalty iteration")
    ax.set_ylabel("norm")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
