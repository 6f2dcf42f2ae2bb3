"""Independent brute-force oracles.

Everything here is written from first principles with plain Python loops:
no numpy, no imports from the code paths under test. The AP oracle
re-matches every ranked prefix from scratch and integrates the precision
envelope segment by segment; the AUC oracle counts positive/negative pairs
directly.
"""

from __future__ import annotations

import math


def corner_iou(a: list[float], b: list[float]) -> float:
    """IoU of two [x, y, w, h] boxes via corner arithmetic."""
    ax0, ay0, aw, ah = a
    bx0, by0, bw, bh = b
    ax1, ay1 = ax0 + aw, ay0 + ah
    bx1, by1 = bx0 + bw, by0 + bh
    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = aw * ah + bw * bh - inter
    return inter / union if union > 0 else 0.0


def greedy_match_tp_count(
    det_boxes: list[list[float]], gt_boxes: list[list[float]], iou_thr: float
) -> int:
    """TP count when the given detections (already in rank order) claim
    unmatched ground truths of maximal IoU."""
    gts = sorted(gt_boxes, key=tuple)
    used = [False] * len(gts)
    tps = 0
    for db in det_boxes:
        best, best_j = 0.0, -1
        for j, gb in enumerate(gts):
            if used[j]:
                continue
            v = corner_iou(db, gb)
            if v > best:
                best, best_j = v, j
        if best_j >= 0 and best >= iou_thr:
            used[best_j] = True
            tps += 1
    return tps


def _rank_key(entry: dict):
    return (-entry["score"], entry["image_id"], entry["class_id"], tuple(entry["bbox"]))


def oracle_class_ap(
    dets: list[dict], gts: list[dict], iou_thr: float = 0.5
) -> float | None:
    """AP for one class over pooled images; None when there is no ground truth.

    ``dets``: {image_id, class_id, bbox, score}; ``gts``: {image_id, bbox}.
    Each ranked prefix is re-matched from scratch (quadratic), giving one
    (recall, precision) point per rank; the envelope integral is then summed
    over the distinct recall breakpoints.
    """
    n_gt = len(gts)
    if n_gt == 0:
        return None
    if not dets:
        return 0.0
    ranked = sorted(dets, key=_rank_key)
    gt_boxes_by_image: dict[str, list[list[float]]] = {}
    for g in gts:
        gt_boxes_by_image.setdefault(g["image_id"], []).append(g["bbox"])

    points: list[tuple[float, float]] = []
    for k in range(1, len(ranked) + 1):
        prefix = ranked[:k]
        tp = 0
        for image_id in {d["image_id"] for d in prefix}:
            image_dets = [d["bbox"] for d in prefix if d["image_id"] == image_id]
            tp += greedy_match_tp_count(
                image_dets, gt_boxes_by_image.get(image_id, []), iou_thr
            )
        points.append((tp / n_gt, tp / k))

    ap = 0.0
    r_prev = 0.0
    for k, (r_k, _) in enumerate(points):
        if r_k <= r_prev:
            continue
        p_env = max(p for r, p in points[k:] if r >= r_k)
        ap += (r_k - r_prev) * p_env
        r_prev = r_k
    return ap


def oracle_evaluate(manifest, dets, iou_thr: float = 0.5) -> dict:
    """Per-(domain, class) AP dict computed entirely through the oracle path.

    Accepts the toolkit's manifest/detection objects but reduces them to
    plain dicts immediately; only ids, boxes, and scores are read.
    """
    domain_of = {rec.image_id: rec.generator_domain for rec in manifest.images}
    domains = sorted(set(domain_of.values())) + ["ALL"]
    class_ids = sorted({g.cls.id for rec in manifest.images for g in rec.annotations}
                       | {d.cls.id for d in dets})
    out: dict[tuple[str, int], float | None] = {}
    for domain in domains:
        for cid in class_ids:
            gts = [
                {"image_id": g.image_id, "bbox": g.box.as_list()}
                for rec in manifest.images
                for g in rec.annotations
                if g.cls.id == cid and (domain == "ALL" or domain_of[g.image_id] == domain)
            ]
            cls_dets = [
                {
                    "image_id": d.image_id,
                    "class_id": d.cls.id,
                    "bbox": d.box.as_list(),
                    "score": d.score,
                }
                for d in dets
                if d.cls.id == cid and (domain == "ALL" or domain_of[d.image_id] == domain)
            ]
            out[(domain, cid)] = oracle_class_ap(cls_dets, gts, iou_thr)
    return out


def oracle_auc(scores: dict[str, float], labels: dict[str, bool]) -> float:
    """Mann-Whitney pairwise counting: P(pos > neg) + 0.5 * P(tie)."""
    pos = [scores[i] for i in scores if labels[i]]
    neg = [scores[i] for i in scores if not labels[i]]
    if not pos or not neg:
        raise ValueError("need both classes")
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def oracle_topk_selection(scores: list[float], k: float) -> int:
    """Expected per-category selection count."""
    return math.ceil(k * len(scores))
