"""Shared builders for manifest/detection fixtures."""

from __future__ import annotations

import json
import random
from pathlib import Path

from artifact import Box, DetectionInstance, Manifest, load_ground_truth
from artifact.taxonomy import Mode, class_from_id, classes_for_mode


def manifest_doc(
    mode: str,
    images: list[tuple[str, str, float, float]],
    annotations: list[tuple[str, int, list[float]]] | None = None,
    prompts: dict[str, str] | None = None,
) -> dict:
    """Build a ground-truth manifest document.

    ``images``: (image_id, domain, width, height); ``annotations``:
    (image_id, category_id, bbox) or (image_id, category_id, bbox, group_id).
    """
    prompts = prompts or {}
    anns = []
    for entry in annotations or []:
        image_id, cid, bbox = entry[0], entry[1], entry[2]
        ann = {"image_id": image_id, "category_id": cid, "bbox": list(bbox)}
        if len(entry) > 3:
            ann["group_id"] = entry[3]
        anns.append(ann)
    return {
        "mode": mode,
        "images": [
            {
                "image_id": iid,
                "generator_domain": domain,
                "width": w,
                "height": h,
                **({"prompt": prompts[iid]} if iid in prompts else {}),
            }
            for iid, domain, w, h in images
        ],
        "annotations": anns,
        "categories": [
            {"id": c.id, "name": c.name} for c in classes_for_mode(Mode(mode))
        ],
    }


def write_json(path: Path, doc) -> Path:
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def write_manifest(path: Path, *args, **kwargs) -> Path:
    return write_json(path, manifest_doc(*args, **kwargs))


def detections_doc(dets: list[tuple[str, int, list[float], float]]) -> list[dict]:
    return [
        {"image_id": iid, "category_id": cid, "bbox": list(bbox), "score": score}
        for iid, cid, bbox, score in dets
    ]


def det(image_id: str, class_id: int, bbox, score: float, mode: str = "local") -> DetectionInstance:
    return DetectionInstance(
        image_id=image_id,
        cls=class_from_id(Mode(mode), class_id),
        box=Box(*bbox),
        score=score,
    )


def load_manifest_from_doc(tmp_path: Path, doc: dict) -> Manifest:
    path = write_json(tmp_path / f"manifest-{doc['mode']}-{id(doc)}.json", doc)
    return load_ground_truth(path, doc["mode"])


def random_scene(
    rng: random.Random,
    *,
    max_images: int = 3,
    max_classes: int = 4,
    max_gts: int = 10,
    max_dets: int = 20,
    tmp_path: Path,
) -> tuple[Manifest, list[DetectionInstance]]:
    """A random multi-image local-mode scene with bounded size.

    Scores are occasionally quantized to force ties so the deterministic
    tie-break paths get exercised.
    """
    n_images = rng.randint(1, max_images)
    image_ids = [f"img-{i}" for i in range(n_images)]
    images = [(iid, rng.choice(["a", "b"]), 128.0, 128.0) for iid in image_ids]
    n_classes = rng.randint(1, max_classes)
    quantize = rng.random() < 0.4

    def rand_box() -> list[float]:
        x = rng.uniform(0, 80)
        y = rng.uniform(0, 80)
        w = rng.uniform(1, 45)
        h = rng.uniform(1, 45)
        return [x, y, w, h]

    annotations = []
    for _ in range(rng.randint(0, max_gts)):
        annotations.append((rng.choice(image_ids), rng.randint(1, n_classes), rand_box()))
    manifest = load_manifest_from_doc(
        tmp_path, manifest_doc("local", images, annotations)
    )

    dets = []
    for _ in range(rng.randint(0, max_dets)):
        score = rng.random()
        if quantize:
            score = round(score, 1)
        dets.append(det(rng.choice(image_ids), rng.randint(1, n_classes), rand_box(), score))
    return manifest, dets
