"""Figure rendering for report outputs.

Each renderer writes one PNG next to the machine-readable report the CLI
produces. Rendering is headless (Agg) and deterministic in layout.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .metrics import ALL_DOMAINS, EvalReport, RocCurve
from .report import AucRow, CountsTable
from .taxonomy import classes_for_mode

_DPI = 150


def _class_labels(classes) -> list[str]:
    return [c.name.replace("_", "\n") for c in classes]


def _grouped_bars(ax, domains: Sequence[str], classes, values) -> None:
    n_groups = len(classes)
    n_series = len(domains)
    width = 0.8 / max(n_series, 1)
    x = np.arange(n_groups)
    for i, domain in enumerate(domains):
        ax.bar(x + i * width, values[i], width, label=domain)
    ax.set_xticks(x + width * (n_series - 1) / 2)
    ax.set_xticklabels(_class_labels(classes), fontsize=8)
    ax.legend(fontsize=8)


def render_eval_figure(report: EvalReport, path: str | Path) -> Path:
    """Grouped per-class AP50 bars, one series per generator domain."""
    classes = classes_for_mode(report.mode)
    domains = [d for d in report.domains if d != ALL_DOMAINS]
    values = [
        [
            (report.cell(d, c).ap50 or 0.0) * 100 if report.cell(d, c).ap50 is not None else 0.0
            for c in classes
        ]
        for d in domains
    ]
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(classes)), 4))
    _grouped_bars(ax, domains, classes, values)
    ax.set_ylabel("AP50 (%)")
    ax.set_title(f"Per-class AP50 ({report.mode.value} artifacts, IoU {report.iou_threshold})")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_counts_figure(table: CountsTable, path: str | Path) -> Path:
    """Class-distribution bars per generator domain."""
    domains = [d for d in table.domains if d != ALL_DOMAINS]
    values = [[table.counts[(d, c.name)] for c in table.classes] for d in domains]
    fig, ax = plt.subplots(figsize=(max(6, 1.1 * len(table.classes)), 4))
    _grouped_bars(ax, domains, table.classes, values)
    ax.set_ylabel("annotated instances")
    ax.set_title(f"Artifact distribution by class ({table.mode})")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path


def render_roc_figure(
    curves: Mapping[tuple[str, str], RocCurve],
    rows: Sequence[AucRow],
    path: str | Path,
) -> Path:
    """Overlayed ROC curves for the overall (pooled-domain) comparison."""
    auc_of = {(r.method, r.domain): r.auc for r in rows}
    fig, ax = plt.subplots(figsize=(5, 5))
    for (method, domain), curve in sorted(curves.items()):
        if domain != ALL_DOMAINS:
            continue
        auc = auc_of.get((method, domain))
        label = method if auc is None else f"{method} (AUC {auc:.3f})"
        ax.plot(curve.fpr, curve.tpr, label=label)
    ax.plot([0, 1], [0, 1], linestyle=":", color="gray", linewidth=1)
    ax.set_xlabel("false positive rate")
    ax.set_ylabel("true positive rate")
    ax.set_title("Method comparison (all domains)")
    ax.legend(fontsize=8, loc="lower right")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=_DPI)
    plt.close(fig)
    return path
