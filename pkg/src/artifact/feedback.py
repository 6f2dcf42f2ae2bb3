"""Finetuning feedback set construction.

Selects the most confident detections per category at a confidence ratio k,
then builds prompt records that prepend the selected classes' identifier
phrases (later used as negative prompts) and reference the full image plus
one padded crop per selected box.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import Box, DetectionInstance
from .metrics import detection_sort_key
from .taxonomy import ArtifactClass

MANIFEST_FORMAT = "feedback-manifest/1"
MANIFEST_NOTE = "identifiers serve as negative prompts at generation time"

DEFAULT_K = 0.30
DEFAULT_CROP_PAD = 0.10


@dataclass(frozen=True)
class SelectionParams:
    """Confidence-ratio selection knobs. ``per_category`` applies k within
    each category independently; otherwise over the pooled detections."""

    k: float = DEFAULT_K
    per_category: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.k <= 1.0:
            raise ValueError(f"k must be in (0, 1], got {self.k}")


def select_top_k_percent(
    dets: Sequence[DetectionInstance], params: SelectionParams = SelectionParams()
) -> list[DetectionInstance]:
    """Keep the ceil(k * n_c) highest-score detections of each category c.

    Ceiling keeps at least one sample whenever a category fires at all.
    Ties use the deterministic detection ordering shared with matching.
    """
    groups: dict[ArtifactClass, list[DetectionInstance]] = {}
    if params.per_category:
        for d in dets:
            groups.setdefault(d.cls, []).append(d)
    else:
        groups = {None: list(dets)} if dets else {}  # type: ignore[dict-item]
    selected: list[DetectionInstance] = []
    for group in groups.values():
        group.sort(key=detection_sort_key)
        take = math.ceil(params.k * len(group))
        selected.extend(group[:take])
    selected.sort(key=detection_sort_key)
    return selected


@dataclass(frozen=True)
class ImagePair:
    """One training image reference: the full image (crop_box None) or a
    cropped artifact region."""

    image_ref: str
    crop_box: Box | None = None


@dataclass(frozen=True)
class FeedbackRecord:
    """One finetuning data unit: a prompt, its identifier-augmented variant,
    and the image/crop references backing it."""

    image_id: str
    original_prompt: str
    identifiers: tuple[str, ...]
    augmented_prompt: str
    pairs: tuple[ImagePair, ...]


def augment_prompt(
    prompt: str,
    selected: Sequence[DetectionInstance],
    *,
    image_id: str | None = None,
    image_ref: str | None = None,
    image_size: tuple[float, float] | None = None,
    crop_pad: float = DEFAULT_CROP_PAD,
) -> FeedbackRecord:
    """Build the feedback record for one image.

    Identifiers are the deduplicated phrases of the selected classes in
    descending max-score order. With nothing selected the record passes the
    prompt through untouched, keeping only the full-image pair. Crop boxes
    are the detection boxes padded by ``crop_pad`` per side, clamped to
    ``image_size`` when given.
    """
    ids = {d.image_id for d in selected}
    if len(ids) > 1:
        raise ValueError(f"selected detections span multiple images: {sorted(ids)}")
    if image_id is None:
        if not ids:
            raise ValueError("image_id required when nothing is selected")
        image_id = next(iter(ids))
    ref = image_ref if image_ref is not None else image_id

    best: dict[str, float] = {}
    class_id: dict[str, int] = {}
    for d in selected:
        phrase = d.cls.phrase
        best[phrase] = max(best.get(phrase, 0.0), d.score)
        class_id[phrase] = d.cls.id
    identifiers = tuple(sorted(best, key=lambda p: (-best[p], class_id[p], p)))

    augmented = ", ".join([*identifiers, prompt]) if identifiers else prompt

    pairs: list[ImagePair] = [ImagePair(image_ref=ref, crop_box=None)]
    for d in sorted(selected, key=detection_sort_key):
        crop = d.box.padded(crop_pad)
        if image_size is not None:
            crop = crop.clamped(*image_size)
        pairs.append(ImagePair(image_ref=ref, crop_box=crop))
    return FeedbackRecord(
        image_id=image_id,
        original_prompt=prompt,
        identifiers=identifiers,
        augmented_prompt=augmented,
        pairs=tuple(pairs),
    )


def _record_to_dict(record: FeedbackRecord) -> dict:
    return {
        "image_id": record.image_id,
        "original_prompt": record.original_prompt,
        "identifiers": list(record.identifiers),
        "augmented_prompt": record.augmented_prompt,
        "pairs": [
            {"image_ref": p.image_ref}
            if p.crop_box is None
            else {"image_ref": p.image_ref, "crop_box": p.crop_box.as_list()}
            for p in record.pairs
        ],
    }


def _record_from_dict(doc: dict) -> FeedbackRecord:
    pairs = tuple(
        ImagePair(
            image_ref=p["image_ref"],
            crop_box=Box(*p["crop_box"]) if "crop_box" in p else None,
        )
        for p in doc["pairs"]
    )
    return FeedbackRecord(
        image_id=doc["image_id"],
        original_prompt=doc["original_prompt"],
        identifiers=tuple(doc["identifiers"]),
        augmented_prompt=doc["augmented_prompt"],
        pairs=pairs,
    )


def emit_feedback_manifest(records: Iterable[FeedbackRecord], path: str | Path) -> Path:
    """Write a JSON-lines finetuning manifest: a header line documenting the
    format and negative-prompt usage, then one record per line."""
    records = list(records)
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        header = {"format": MANIFEST_FORMAT, "note": MANIFEST_NOTE, "records": len(records)}
        f.write(json.dumps(header, sort_keys=True) + "\n")
        for record in records:
            f.write(json.dumps(_record_to_dict(record), sort_keys=True) + "\n")
    return path


def load_feedback_manifest(path: str | Path) -> list[FeedbackRecord]:
    """Parse a manifest written by :func:`emit_feedback_manifest`."""
    with open(path, encoding="utf-8") as f:
        lines = [line for line in f if line.strip()]
    if not lines:
        raise ValueError(f"{path}: empty feedback manifest (missing header line)")
    header = json.loads(lines[0])
    if header.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{path}: unrecognized manifest format {header.get('format')!r}")
    return [_record_from_dict(json.loads(line)) for line in lines[1:]]
