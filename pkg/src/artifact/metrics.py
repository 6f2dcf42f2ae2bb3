"""Detection evaluation metrics.

Covers box IoU, greedy score-ordered matching, per-class AP50 with the
all-points precision-envelope integral, per-domain report assembly with
macro row averages, the detection-to-classification reframing (an image is
scored by its highest detection confidence), ROC/AUC, top-quantile score
aggregates, and prediction-count statistics.

All functions are pure over immutable inputs; evaluation is safe to
parallelize across images and classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Box, DetectionInstance, GroundTruthInstance, Manifest
from .taxonomy import ArtifactClass, Mode, classes_for_mode

ALL_DOMAINS = "ALL"


def iou(a: Box, b: Box) -> float:
    """Intersection over union of two boxes; 0.0 when the union is empty."""
    ix = min(a.x_max, b.x_max) - max(a.x, b.x)
    iy = min(a.y_max, b.y_max) - max(a.y, b.y)
    if ix <= 0 or iy <= 0:
        inter = 0.0
    else:
        inter = ix * iy
    union = a.area + b.area - inter
    if union <= 0:
        return 0.0
    return inter / union


def detection_sort_key(d: DetectionInstance):
    # Descending score; ties broken by (image_id, class id, box) for
    # order-independent results.
    return (-d.score, d.image_id, d.cls.id, d.box)


@dataclass(frozen=True)
class MatchResult:
    """Greedy matching outcome for one (image, class) group.

    ``flags`` holds one True (TP) / False (FP) entry per detection in
    descending-score order; ``fn_count`` counts unmatched ground truths.
    """

    flags: tuple[bool, ...]
    scores: tuple[float, ...]
    fn_count: int

    @property
    def tp_count(self) -> int:
        return sum(self.flags)

    @property
    def fp_count(self) -> int:
        return len(self.flags) - self.tp_count

    @property
    def gt_count(self) -> int:
        return self.tp_count + self.fn_count


def match_detections(
    dets: Sequence[DetectionInstance],
    gts: Sequence[GroundTruthInstance],
    iou_threshold: float = 0.5,
) -> MatchResult:
    """Greedily match detections to ground truths of one image and class.

    Detections are processed in descending score order; each one claims the
    still-unmatched ground truth of maximum IoU if that IoU reaches
    ``iou_threshold`` (a TP), otherwise it is an FP. Each ground truth is
    matched at most once; leftovers are FNs. Deterministic under input
    reordering: score ties fall back to box order, and equal-IoU ground
    truths are claimed in canonical box order.
    """
    keys = {(d.image_id, d.cls) for d in dets} | {(g.image_id, g.cls) for g in gts}
    if len(keys) > 1:
        seen = sorted((iid, cls.id) for iid, cls in keys)
        raise ValueError(f"mixed image_ids or classes in matching input: {seen}")

    ordered = sorted(dets, key=detection_sort_key)
    gt_order = sorted(gts, key=lambda g: (g.box, g.group_id is None, g.group_id or 0))
    matched = [False] * len(gt_order)
    flags: list[bool] = []
    for det in ordered:
        best_iou = 0.0
        best_j = -1
        for j, gt in enumerate(gt_order):
            if matched[j]:
                continue
            v = iou(det.box, gt.box)
            if v > best_iou:
                best_iou = v
                best_j = j
        if best_j >= 0 and best_iou >= iou_threshold:
            matched[best_j] = True
            flags.append(True)
        else:
            flags.append(False)
    return MatchResult(
        flags=tuple(flags),
        scores=tuple(d.score for d in ordered),
        fn_count=matched.count(False),
    )


@dataclass(frozen=True)
class PrCurve:
    """Precision as a function of recall, one point per ranked detection."""

    recall: tuple[float, ...]
    precision: tuple[float, ...]


def pr_curve(flags: Sequence[bool], gt_count: int) -> PrCurve:
    if gt_count < 1:
        raise ValueError("PR curve undefined without ground truths")
    tp = np.cumsum(np.asarray(flags, dtype=float))
    fp = np.cumsum(~np.asarray(flags, dtype=bool))
    recall = tp / gt_count
    precision = tp / np.maximum(tp + fp, 1e-300)
    return PrCurve(recall=tuple(recall.tolist()), precision=tuple(precision.tolist()))


def _envelope_ap(recall: np.ndarray, precision: np.ndarray) -> float:
    # All-points interpolation: integrate the right-continuous precision
    # envelope over recall.
    mrec = np.concatenate(([0.0], recall, [1.0]))
    mpre = np.concatenate(([0.0], precision, [0.0]))
    for i in range(mpre.size - 1, 0, -1):
        mpre[i - 1] = max(mpre[i - 1], mpre[i])
    changed = np.where(mrec[1:] != mrec[:-1])[0]
    return float(np.sum((mrec[changed + 1] - mrec[changed]) * mpre[changed + 1]))


def average_precision_50(match: MatchResult) -> float:
    """AP at the matching threshold: integral of the precision envelope.

    Raises ValueError when the match has no ground truths (undefined AP).
    """
    if match.gt_count < 1:
        raise ValueError("AP undefined: no ground-truth instances")
    if not match.flags:
        return 0.0
    curve = pr_curve(match.flags, match.gt_count)
    return _envelope_ap(np.asarray(curve.recall), np.asarray(curve.precision))


@dataclass(frozen=True)
class ClassAp:
    """One report cell: AP50 (or None when no ground truth exists) plus the
    ground-truth instance count, as in the per-class result tables."""

    cls: ArtifactClass
    ap50: float | None
    gt_count: int


@dataclass(frozen=True)
class EvalReport:
    """Per-(domain, class) AP50 cells with per-domain macro averages and a
    pooled overall row."""

    mode: Mode
    iou_threshold: float
    domains: tuple[str, ...]
    cells: dict[tuple[str, ArtifactClass], ClassAp]
    metadata: dict = field(default_factory=dict)

    def cell(self, domain: str, cls: ArtifactClass) -> ClassAp:
        return self.cells[(domain, cls)]

    def row_average(self, domain: str) -> float | None:
        """Mean AP50 over the row's defined cells (zero-gt classes excluded)."""
        defined = [
            cell.ap50
            for (d, _), cell in self.cells.items()
            if d == domain and cell.ap50 is not None
        ]
        if not defined:
            return None
        return float(sum(defined) / len(defined))

    @property
    def row_averages(self) -> dict[str, float | None]:
        return {d: self.row_average(d) for d in self.domains}


def _pooled_class_flags(
    dets: Sequence[DetectionInstance],
    gts_by_image: Mapping[str, Sequence[GroundTruthInstance]],
    iou_threshold: float,
) -> tuple[list[bool], int]:
    """Match per image, then pool the flags in global descending-score order."""
    by_image: dict[str, list[DetectionInstance]] = {}
    for d in dets:
        by_image.setdefault(d.image_id, []).append(d)
    entries: list[tuple[tuple, bool]] = []
    gt_total = 0
    seen_images = set(by_image)
    for image_id, image_dets in by_image.items():
        image_gts = gts_by_image.get(image_id, ())
        result = match_detections(image_dets, image_gts, iou_threshold)
        ordered = sorted(image_dets, key=detection_sort_key)
        for det, flag in zip(ordered, result.flags):
            entries.append((detection_sort_key(det), flag))
        gt_total += len(image_gts)
    for image_id, image_gts in gts_by_image.items():
        if image_id not in seen_images:
            gt_total += len(image_gts)
    entries.sort(key=lambda e: e[0])
    return [flag for _, flag in entries], gt_total


def evaluate(
    manifest: Manifest,
    dets: Sequence[DetectionInstance],
    iou_threshold: float = 0.5,
) -> EvalReport:
    """Per-domain, per-class AP50 report with macro row averages.

    Row averages run over defined (gt_count > 0) cells only; the overall
    row pools instances from every domain before re-evaluating. Global-mode
    multi-label boxes evaluate as independent per-class instances.
    """
    domains: list[str] = []
    for rec in manifest.images:
        if rec.generator_domain not in domains:
            domains.append(rec.generator_domain)
    domain_of = {rec.image_id: rec.generator_domain for rec in manifest.images}

    classes = classes_for_mode(manifest.mode)
    cells: dict[tuple[str, ArtifactClass], ClassAp] = {}
    for domain in [*domains, ALL_DOMAINS]:

        def in_domain(image_id: str, _domain: str = domain) -> bool:
            return _domain == ALL_DOMAINS or domain_of[image_id] == _domain

        for cls in classes:
            gts_by_image: dict[str, list[GroundTruthInstance]] = {}
            for rec in manifest.images:
                if not in_domain(rec.image_id):
                    continue
                selected = [g for g in rec.annotations if g.cls == cls]
                if selected:
                    gts_by_image[rec.image_id] = selected
            cls_dets = [d for d in dets if d.cls == cls and in_domain(d.image_id)]
            flags, gt_count = _pooled_class_flags(cls_dets, gts_by_image, iou_threshold)
            if gt_count == 0:
                cells[(domain, cls)] = ClassAp(cls=cls, ap50=None, gt_count=0)
            elif not flags:
                cells[(domain, cls)] = ClassAp(cls=cls, ap50=0.0, gt_count=gt_count)
            else:
                curve = pr_curve(flags, gt_count)
                ap = _envelope_ap(np.asarray(curve.recall), np.asarray(curve.precision))
                cells[(domain, cls)] = ClassAp(cls=cls, ap50=ap, gt_count=gt_count)

    return EvalReport(
        mode=manifest.mode,
        iou_threshold=iou_threshold,
        domains=(*domains, ALL_DOMAINS),
        cells=cells,
        metadata={
            "multi_label_boxes": "evaluated as independent per-class instances",
        },
    )


def image_score(dets: Iterable[DetectionInstance]) -> float:
    """Classification score of one image: its maximum detection confidence.

    An image with no detections scores 0.0 (no evidence of artifacts ranks
    lowest in the reframed ordering).
    """
    return max((d.score for d in dets), default=0.0)


def image_scores(
    dets: Iterable[DetectionInstance], image_ids: Iterable[str]
) -> dict[str, float]:
    """Per-image classification scores over a full corpus."""
    scores = {iid: 0.0 for iid in image_ids}
    for d in dets:
        if d.image_id not in scores:
            raise ValueError(f"detection references unknown image_id {d.image_id!r}")
        scores[d.image_id] = max(scores[d.image_id], d.score)
    return scores


def binary_labels_from_gt(*manifests: Manifest) -> dict[str, bool]:
    """Reframe detection ground truth as image-level labels.

    An image is positive iff it carries at least one annotation in any of
    the given manifests (typically the local and global manifests of one
    corpus); all other images are negative.
    """
    labels: dict[str, bool] = {}
    for manifest in manifests:
        for rec in manifest.images:
            labels[rec.image_id] = labels.get(rec.image_id, False) or bool(rec.annotations)
    return labels


@dataclass(frozen=True)
class RocCurve:
    """ROC curve over all score thresholds, with trapezoidal AUC.

    ``thresholds[i]`` is the score cut-off producing ``(fpr[i], tpr[i])``;
    the curve starts at (0, 0) (threshold +inf) and ends at (1, 1).
    """

    thresholds: tuple[float, ...]
    fpr: tuple[float, ...]
    tpr: tuple[float, ...]
    auc: float

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.fpr, self.tpr))


def roc_auc(scores: Mapping[str, float], labels: Mapping[str, bool]) -> RocCurve:
    """ROC curve and AUC for per-image scores against binary labels.

    The trapezoidal integral over the threshold sweep equals the
    Mann-Whitney statistic P(score_pos > score_neg) + 0.5 * P(tie). Needs
    at least one positive and one negative; keys of both maps must agree.
    """
    missing = set(scores) ^ set(labels)
    if missing:
        raise ValueError(f"scores and labels disagree on image ids: {sorted(missing)[:5]}")
    ordered = sorted(scores, key=lambda iid: -scores[iid])
    n_pos = sum(1 for iid in ordered if labels[iid])
    n_neg = len(ordered) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs at least one positive and one negative sample")

    thresholds: list[float] = [math.inf]
    fpr: list[float] = [0.0]
    tpr: list[float] = [0.0]
    tp = fp = 0
    i = 0
    while i < len(ordered):
        t = scores[ordered[i]]
        while i < len(ordered) and scores[ordered[i]] == t:
            if labels[ordered[i]]:
                tp += 1
            else:
                fp += 1
            i += 1
        thresholds.append(t)
        fpr.append(fp / n_neg)
        tpr.append(tp / n_pos)
    auc = float(np.trapezoid(tpr, fpr))
    return RocCurve(thresholds=tuple(thresholds), fpr=tuple(fpr), tpr=tuple(tpr), auc=auc)


@dataclass(frozen=True)
class ScoreAggregate:
    """Sum and mean of an image's top-q fraction of detection scores."""

    q: float
    count: int
    total: float
    mean: float


def topq_aggregate(dets: Sequence[DetectionInstance], q: float = 0.10) -> ScoreAggregate:
    """Aggregate the ceil(q*n) highest scores of one image's detections.

    An image with no detections aggregates to total 0 and mean 0 by
    convention.
    """
    if not 0.0 < q <= 1.0:
        raise ValueError(f"q must be in (0, 1], got {q}")
    scores = sorted((d.score for d in dets), reverse=True)
    take = math.ceil(q * len(scores))
    top = scores[:take]
    total = float(sum(top))
    return ScoreAggregate(q=q, count=take, total=total, mean=total / take if take else 0.0)


def topq_by_image(
    dets: Iterable[DetectionInstance], image_ids: Iterable[str], q: float = 0.10
) -> dict[str, ScoreAggregate]:
    """Per-image top-q aggregates over a corpus (detection-free images
    contribute zero aggregates); corpus-level means are simple averages of
    the per-image values."""
    by_image: dict[str, list[DetectionInstance]] = {iid: [] for iid in image_ids}
    for d in dets:
        if d.image_id not in by_image:
            raise ValueError(f"detection references unknown image_id {d.image_id!r}")
        by_image[d.image_id].append(d)
    return {iid: topq_aggregate(group, q) for iid, group in by_image.items()}


@dataclass(frozen=True)
class PredictionStats:
    """Detector output volume and confidence over a corpus."""

    preds_per_image: float
    mean_confidence: float
    detection_count: int
    image_count: int


def prediction_stats(dets: Sequence[DetectionInstance], image_count: int) -> PredictionStats:
    """Predictions per image and mean confidence (0.0 with no detections)."""
    if image_count < 1:
        raise ValueError("image_count must be >= 1")
    n = len(dets)
    mean_conf = float(sum(d.score for d in dets) / n) if n else 0.0
    return PredictionStats(
        preds_per_image=n / image_count,
        mean_confidence=mean_conf,
        detection_count=n,
        image_count=image_count,
    )
