"""Report assembly and serialization: JSON documents, aligned text tables
mirroring the per-class result tables, ROC CSV export, and dataset count
breakdowns."""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Mapping, Sequence

from .corpus import DetectionInstance, Manifest
from .metrics import (
    ALL_DOMAINS,
    EvalReport,
    PredictionStats,
    RocCurve,
    binary_labels_from_gt,
    image_scores,
    roc_auc,
)
from .taxonomy import ArtifactClass, classes_for_mode


def _fmt_ap(ap: float | None) -> str:
    return "-" if ap is None else f"{ap * 100:.1f}"


def report_to_json_dict(report: EvalReport) -> dict:
    rows = {}
    for domain in report.domains:
        cells = {}
        for cls in classes_for_mode(report.mode):
            cell = report.cell(domain, cls)
            cells[cls.name] = {"ap50": cell.ap50, "gt_count": cell.gt_count}
        avg = report.row_average(domain)
        rows[domain] = {"cells": cells, "average": avg}
    return {
        "mode": report.mode.value,
        "iou_threshold": report.iou_threshold,
        "domains": list(report.domains),
        "rows": rows,
        "metadata": dict(report.metadata),
    }


def render_report_table(report: EvalReport) -> str:
    """Aligned text table with "ap / n" cells, "- / 0" for undefined, and a
    macro Average column."""
    classes = classes_for_mode(report.mode)
    headers = ["Domain", *(c.name for c in classes), "Average"]
    rows: list[list[str]] = []
    for domain in report.domains:
        row = [domain]
        for cls in classes:
            cell = report.cell(domain, cls)
            row.append(f"{_fmt_ap(cell.ap50)} / {cell.gt_count}")
        avg = report.row_average(domain)
        row.append("-" if avg is None else f"{avg * 100:.1f}")
        rows.append(row)
    return _render_aligned(headers, rows)


def _render_aligned(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    out = io.StringIO()

    def emit(cells: Sequence[str]) -> None:
        out.write("  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip() + "\n")

    emit(headers)
    emit(["-" * w for w in widths])
    for row in rows:
        emit(row)
    return out.getvalue()


def roc_to_csv(curve: RocCurve) -> str:
    lines = ["threshold,fpr,tpr"]
    for t, f, r in zip(curve.thresholds, curve.fpr, curve.tpr):
        lines.append(f"{t!r},{f!r},{r!r}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CountsTable:
    """Annotation counts per (generator domain, class), with image counts."""

    mode: str
    domains: tuple[str, ...]
    classes: tuple[ArtifactClass, ...]
    counts: dict[tuple[str, str], int]
    images: dict[str, int]

    @property
    def total_instances(self) -> int:
        return sum(v for (d, _), v in self.counts.items() if d != ALL_DOMAINS)

    @property
    def total_images(self) -> int:
        return sum(v for d, v in self.images.items() if d != ALL_DOMAINS)


def dataset_counts(manifest: Manifest) -> CountsTable:
    """Per-domain class breakdown of a manifest's annotations."""
    domains: list[str] = []
    for rec in manifest.images:
        if rec.generator_domain not in domains:
            domains.append(rec.generator_domain)
    classes = classes_for_mode(manifest.mode)
    counts = {(d, c.name): 0 for d in [*domains, ALL_DOMAINS] for c in classes}
    images = {d: 0 for d in [*domains, ALL_DOMAINS]}
    for rec in manifest.images:
        images[rec.generator_domain] += 1
        images[ALL_DOMAINS] += 1
        for inst in rec.annotations:
            counts[(rec.generator_domain, inst.cls.name)] += 1
            counts[(ALL_DOMAINS, inst.cls.name)] += 1
    return CountsTable(
        mode=manifest.mode.value,
        domains=(*domains, ALL_DOMAINS),
        classes=classes,
        counts=counts,
        images=images,
    )


def counts_to_json_dict(table: CountsTable, pred_stats: PredictionStats | None = None) -> dict:
    doc = {
        "mode": table.mode,
        "domains": list(table.domains),
        "images": dict(table.images),
        "counts": {
            domain: {c.name: table.counts[(domain, c.name)] for c in table.classes}
            for domain in table.domains
        },
        "total_images": table.total_images,
        "total_instances": table.total_instances,
    }
    if pred_stats is not None:
        doc["prediction_stats"] = {
            "preds_per_image": pred_stats.preds_per_image,
            "mean_confidence": pred_stats.mean_confidence,
            "detection_count": pred_stats.detection_count,
            "image_count": pred_stats.image_count,
        }
    return doc


def render_counts_table(table: CountsTable) -> str:
    headers = ["Domain", "Images", *(c.name for c in table.classes), "Total"]
    rows = []
    for domain in table.domains:
        row = [domain, str(table.images[domain])]
        row.extend(str(table.counts[(domain, c.name)]) for c in table.classes)
        row.append(str(sum(table.counts[(domain, c.name)] for c in table.classes)))
        rows.append(row)
    return _render_aligned(headers, rows)


@dataclass(frozen=True)
class AucRow:
    method: str
    domain: str
    auc: float | None
    n_pos: int
    n_neg: int


def auc_comparison(
    manifests: Sequence[Manifest],
    method_scores: Mapping[str, Mapping[str, float]],
    detections_by_method: Mapping[str, Sequence[DetectionInstance]] | None = None,
) -> tuple[list[AucRow], dict[tuple[str, str], RocCurve]]:
    """AUC per method, overall and per generator-domain subset.

    ``method_scores`` maps a method name to per-image scalar scores; every
    corpus image must be scored. ``detections_by_method`` adds methods whose
    image score is the maximum detection confidence. A subset lacking both
    labels yields auc None for that row. Returns the rows plus the ROC
    curves keyed by (method, domain).
    """
    labels = binary_labels_from_gt(*manifests)
    domain_of: dict[str, str] = {}
    domains: list[str] = []
    for manifest in manifests:
        for rec in manifest.images:
            domain_of.setdefault(rec.image_id, rec.generator_domain)
            if rec.generator_domain not in domains:
                domains.append(rec.generator_domain)

    scores: dict[str, dict[str, float]] = {m: dict(s) for m, s in method_scores.items()}
    for method, dets in (detections_by_method or {}).items():
        scores[method] = image_scores(dets, labels.keys())
    for method, per_image in scores.items():
        missing = set(labels) - set(per_image)
        if missing:
            raise ValueError(
                f"method {method!r} is missing scores for image ids {sorted(missing)[:5]}"
            )
        unknown = set(per_image) - set(labels)
        if unknown:
            raise ValueError(
                f"method {method!r} scores unknown image ids {sorted(unknown)[:5]}"
            )

    rows: list[AucRow] = []
    curves: dict[tuple[str, str], RocCurve] = {}
    for method in scores:
        for domain in [ALL_DOMAINS, *domains]:
            subset = [
                iid
                for iid in labels
                if domain == ALL_DOMAINS or domain_of[iid] == domain
            ]
            n_pos = sum(1 for iid in subset if labels[iid])
            n_neg = len(subset) - n_pos
            if n_pos == 0 or n_neg == 0:
                rows.append(AucRow(method, domain, None, n_pos, n_neg))
                continue
            curve = roc_auc(
                {iid: scores[method][iid] for iid in subset},
                {iid: labels[iid] for iid in subset},
            )
            curves[(method, domain)] = curve
            rows.append(AucRow(method, domain, curve.auc, n_pos, n_neg))
    return rows, curves


def auc_rows_to_json_dict(rows: Sequence[AucRow]) -> dict:
    return {
        "rows": [
            {
                "method": r.method,
                "domain": r.domain,
                "auc": r.auc,
                "n_pos": r.n_pos,
                "n_neg": r.n_neg,
            }
            for r in rows
        ]
    }


def render_auc_table(rows: Sequence[AucRow]) -> str:
    headers = ["Method", "Domain", "AUC", "Pos", "Neg"]
    body = [
        [
            r.method,
            r.domain,
            "-" if r.auc is None else f"{r.auc:.4f}",
            str(r.n_pos),
            str(r.n_neg),
        ]
        for r in rows
    ]
    return _render_aligned(headers, body)
