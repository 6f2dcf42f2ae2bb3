"""Dataset and detection manifest parsing, validation, and pose-based filtering.

File formats (all JSON, UTF-8, decimal numbers):

* Ground-truth manifest: one document with keys ``mode``, ``images``,
  ``annotations``, ``categories``. Boxes are ``[x, y, w, h]`` in pixels.
* Detections: an array of ``{image_id, category_id, bbox, score}`` records,
  or an object ``{"detections": [...], ...}`` whose extra keys are treated
  as documentation (e.g. the detector's score floor).
* Keypoints: a map ``image_id -> [[name, x, y, confidence], ...]``.

Everything parsed here is immutable after load and safe to share across
threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from .taxonomy import ArtifactClass, Mode, class_from_id, classes_for_mode

# Boxes may exceed image bounds by up to this much (rasterization rounding)
# and are clamped; anything further out is rejected as corrupt.
CLAMP_TOLERANCE_PX = 1.0


class ManifestError(ValueError):
    """Raised for malformed or inconsistent manifest content.

    ``context`` names the offending element, e.g. ``annotations[3].bbox``.
    """

    def __init__(self, message: str, *, context: str = "", path: str | Path = ""):
        self.context = context
        self.path = str(path)
        prefix = ""
        if self.path:
            prefix += f"{self.path}: "
        if context:
            prefix += f"{context}: "
        super().__init__(prefix + message)


@dataclass(frozen=True, order=True)
class Box:
    """Axis-aligned box: top-left corner plus size, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if self.w < 0 or self.h < 0:
            raise ValueError(f"box size must be non-negative, got w={self.w}, h={self.h}")

    @property
    def area(self) -> float:
        return self.w * self.h

    @property
    def x_max(self) -> float:
        return self.x + self.w

    @property
    def y_max(self) -> float:
        return self.y + self.h

    def as_list(self) -> list[float]:
        return [self.x, self.y, self.w, self.h]

    def padded(self, frac: float) -> "Box":
        """Grow the box by ``frac`` of its size on every side."""
        dx = self.w * frac
        dy = self.h * frac
        return Box(self.x - dx, self.y - dy, self.w + 2 * dx, self.h + 2 * dy)

    def clamped(self, width: float, height: float) -> "Box":
        """Intersect with the image rectangle [0,width] x [0,height]."""
        x0 = min(max(self.x, 0.0), width)
        y0 = min(max(self.y, 0.0), height)
        x1 = min(max(self.x_max, 0.0), width)
        y1 = min(max(self.y_max, 0.0), height)
        return Box(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True, order=True)
class GroundTruthInstance:
    """One annotated artifact box. ``group_id`` links co-located multi-label
    boxes (several classes sharing one box)."""

    image_id: str
    cls: ArtifactClass
    box: Box
    group_id: int | None = None


@dataclass(frozen=True, order=True)
class DetectionInstance:
    """One detector output box with confidence."""

    image_id: str
    cls: ArtifactClass
    box: Box
    score: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score must be in [0, 1], got {self.score}")


@dataclass(frozen=True)
class ImageRecord:
    """One corpus image with its ground-truth instances."""

    image_id: str
    generator_domain: str
    width: float
    height: float
    prompt: str | None = None
    file_ref: str | None = None
    annotations: tuple[GroundTruthInstance, ...] = ()


@dataclass(frozen=True)
class Manifest:
    """A loaded, validated ground-truth manifest."""

    mode: Mode
    images: tuple[ImageRecord, ...]

    @property
    def image_ids(self) -> frozenset[str]:
        return frozenset(r.image_id for r in self.images)

    def instances(self) -> list[GroundTruthInstance]:
        return [inst for record in self.images for inst in record.annotations]

    def record(self, image_id: str) -> ImageRecord:
        for rec in self.images:
            if rec.image_id == image_id:
                return rec
        raise KeyError(image_id)


@dataclass(frozen=True)
class PoseKeypoint:
    """One ingested pose keypoint (keypoints are never computed here)."""

    name: str
    x: float
    y: float
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"keypoint confidence must be in [0, 1], got {self.confidence}")


@dataclass(frozen=True)
class PoseFilterParams:
    """Thresholds for the human-presence filter; record these alongside any
    output produced from a filtered corpus."""

    min_keypoints: int = 8
    min_confidence: float = 0.5
    min_person_area_frac: float = 0.05


def _require(obj: dict, key: str, context: str, path: str | Path):
    if key not in obj:
        raise ManifestError(f"missing required field {key!r}", context=context, path=path)
    return obj[key]


def _parse_box(raw, context: str, path: str | Path) -> Box:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ManifestError("bbox must be a [x, y, w, h] array", context=context, path=path)
    try:
        vals = [float(v) for v in raw]
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"bbox has non-numeric entry: {exc}", context=context, path=path)
    try:
        return Box(*vals)
    except ValueError as exc:
        raise ManifestError(str(exc), context=context, path=path)


def _validated_box(box: Box, width: float, height: float, context: str, path: str | Path) -> Box:
    if (
        box.x < -CLAMP_TOLERANCE_PX
        or box.y < -CLAMP_TOLERANCE_PX
        or box.x_max > width + CLAMP_TOLERANCE_PX
        or box.y_max > height + CLAMP_TOLERANCE_PX
    ):
        raise ManifestError(
            f"box {box.as_list()} outside image bounds {width}x{height} "
            f"beyond the {CLAMP_TOLERANCE_PX} px clamping tolerance",
            context=context,
            path=path,
        )
    return box.clamped(width, height)


def _load_json(path: str | Path):
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as exc:
        # json's message carries line and column context
        raise ManifestError(f"invalid JSON: {exc}", path=path)


def load_ground_truth(path: str | Path, mode: Mode | str) -> Manifest:
    """Load and validate a ground-truth manifest.

    Rejects duplicate image ids, class ids outside the declared mode's
    range, and boxes extending beyond image bounds by more than the
    clamping tolerance (smaller excursions are clamped).
    """
    mode = Mode(mode) if not isinstance(mode, Mode) else mode
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise ManifestError("manifest must be a JSON object", path=path)

    declared = _require(doc, "mode", "mode", path)
    if declared != mode.value:
        raise ManifestError(
            f"manifest declares mode {declared!r} but {mode.value!r} was requested",
            context="mode",
            path=path,
        )

    known_ids = {c.id for c in classes_for_mode(mode)}
    for i, cat in enumerate(doc.get("categories", [])):
        cid = _require(cat, "id", f"categories[{i}]", path)
        if cid not in known_ids:
            raise ManifestError(
                f"class id {cid} out of range for mode {mode}", context=f"categories[{i}]", path=path
            )

    records: dict[str, ImageRecord] = {}
    for i, img in enumerate(_require(doc, "images", "images", path)):
        ctx = f"images[{i}]"
        image_id = str(_require(img, "image_id", ctx, path))
        if image_id in records:
            raise ManifestError(f"duplicate image_id {image_id!r}", context=ctx, path=path)
        width = float(_require(img, "width", ctx, path))
        height = float(_require(img, "height", ctx, path))
        if width <= 0 or height <= 0:
            raise ManifestError("width and height must be positive", context=ctx, path=path)
        records[image_id] = ImageRecord(
            image_id=image_id,
            generator_domain=str(_require(img, "generator_domain", ctx, path)),
            width=width,
            height=height,
            prompt=img.get("prompt"),
            file_ref=img.get("file_ref"),
        )

    per_image: dict[str, list[GroundTruthInstance]] = {iid: [] for iid in records}
    for i, ann in enumerate(doc.get("annotations", [])):
        ctx = f"annotations[{i}]"
        image_id = str(_require(ann, "image_id", ctx, path))
        if image_id not in records:
            raise ManifestError(f"unknown image_id {image_id!r}", context=ctx, path=path)
        cid = _require(ann, "category_id", ctx, path)
        try:
            cls = class_from_id(mode, int(cid))
        except (TypeError, ValueError) as exc:
            raise ManifestError(str(exc), context=ctx, path=path)
        rec = records[image_id]
        box = _parse_box(_require(ann, "bbox", ctx, path), f"{ctx}.bbox", path)
        box = _validated_box(box, rec.width, rec.height, f"{ctx}.bbox", path)
        group = ann.get("group_id")
        per_image[image_id].append(
            GroundTruthInstance(
                image_id=image_id,
                cls=cls,
                box=box,
                group_id=int(group) if group is not None else None,
            )
        )

    images = tuple(
        replace(records[iid], annotations=tuple(per_image[iid])) for iid in records
    )
    return Manifest(mode=mode, images=images)


def serialize_ground_truth(manifest: Manifest) -> dict:
    """Inverse of :func:`load_ground_truth`: a JSON-ready document that
    loads back to a structurally identical manifest."""
    annotations = []
    for rec in manifest.images:
        for inst in rec.annotations:
            entry: dict = {
                "image_id": inst.image_id,
                "category_id": inst.cls.id,
                "bbox": inst.box.as_list(),
            }
            if inst.group_id is not None:
                entry["group_id"] = inst.group_id
            annotations.append(entry)
    images = []
    for rec in manifest.images:
        img: dict = {
            "image_id": rec.image_id,
            "generator_domain": rec.generator_domain,
            "width": rec.width,
            "height": rec.height,
        }
        if rec.prompt is not None:
            img["prompt"] = rec.prompt
        if rec.file_ref is not None:
            img["file_ref"] = rec.file_ref
        images.append(img)
    return {
        "mode": manifest.mode.value,
        "images": images,
        "annotations": annotations,
        "categories": [
            {"id": c.id, "name": c.name} for c in classes_for_mode(manifest.mode)
        ],
    }


def load_detections(
    path: str | Path, mode: Mode | str, manifest: Manifest
) -> list[DetectionInstance]:
    """Load a detections file against an already-loaded manifest.

    Detections are accepted verbatim whatever their score; filtering by a
    confidence floor is the caller's choice. Unknown image ids, unknown
    class ids, and scores outside [0, 1] are rejected.
    """
    mode = Mode(mode) if not isinstance(mode, Mode) else mode
    doc = _load_json(path)
    if isinstance(doc, dict):
        entries = _require(doc, "detections", "detections", path)
    else:
        entries = doc
    if not isinstance(entries, list):
        raise ManifestError("detections must be a JSON array", path=path)

    out: list[DetectionInstance] = []
    for i, det in enumerate(entries):
        ctx = f"detections[{i}]"
        image_id = str(_require(det, "image_id", ctx, path))
        if image_id not in manifest.image_ids:
            raise ManifestError(f"unknown image_id {image_id!r}", context=ctx, path=path)
        try:
            cls = class_from_id(mode, int(_require(det, "category_id", ctx, path)))
        except (TypeError, ValueError) as exc:
            raise ManifestError(str(exc), context=ctx, path=path)
        rec = manifest.record(image_id)
        box = _parse_box(_require(det, "bbox", ctx, path), f"{ctx}.bbox", path)
        box = _validated_box(box, rec.width, rec.height, f"{ctx}.bbox", path)
        score = _require(det, "score", ctx, path)
        try:
            out.append(DetectionInstance(image_id=image_id, cls=cls, box=box, score=float(score)))
        except (TypeError, ValueError) as exc:
            raise ManifestError(str(exc), context=ctx, path=path)
    return out


def serialize_detections(dets: list[DetectionInstance]) -> list[dict]:
    return [
        {
            "image_id": d.image_id,
            "category_id": d.cls.id,
            "bbox": d.box.as_list(),
            "score": d.score,
        }
        for d in dets
    ]


def load_keypoints(path: str | Path) -> dict[str, tuple[PoseKeypoint, ...]]:
    """Load a keypoints file: map image_id -> [[name, x, y, confidence], ...]."""
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise ManifestError("keypoints file must be a JSON object", path=path)
    out: dict[str, tuple[PoseKeypoint, ...]] = {}
    for image_id, entries in doc.items():
        kps = []
        for i, entry in enumerate(entries):
            ctx = f"{image_id}[{i}]"
            if not isinstance(entry, (list, tuple)) or len(entry) != 4:
                raise ManifestError(
                    "keypoint must be [name, x, y, confidence]", context=ctx, path=path
                )
            name, x, y, conf = entry
            try:
                kps.append(PoseKeypoint(str(name), float(x), float(y), float(conf)))
            except (TypeError, ValueError) as exc:
                raise ManifestError(str(exc), context=ctx, path=path)
        out[str(image_id)] = tuple(kps)
    return out


def filter_by_pose(
    records: list[ImageRecord],
    keypoints: dict[str, tuple[PoseKeypoint, ...]],
    params: PoseFilterParams = PoseFilterParams(),
) -> tuple[list[ImageRecord], list[ImageRecord]]:
    """Partition images by significant human presence.

    An image is kept iff it has at least ``min_keypoints`` keypoints at
    confidence >= ``min_confidence`` whose axis-aligned bounding hull covers
    at least ``min_person_area_frac`` of the image area. The keypoint file
    format carries no person grouping, so all keypoints of an image are
    pooled. Returns ``(kept, dropped)``, an exhaustive disjoint partition.
    """
    kept: list[ImageRecord] = []
    dropped: list[ImageRecord] = []
    for rec in records:
        if rec.image_id not in keypoints:
            raise ManifestError(
                f"no keypoint entry for image_id {rec.image_id!r}", context=rec.image_id
            )
        confident = [k for k in keypoints[rec.image_id] if k.confidence >= params.min_confidence]
        if len(confident) < params.min_keypoints:
            dropped.append(rec)
            continue
        xs = [k.x for k in confident]
        ys = [k.y for k in confident]
        hull_area = (max(xs) - min(xs)) * (max(ys) - min(ys))
        if hull_area >= params.min_person_area_frac * rec.width * rec.height:
            kept.append(rec)
        else:
            dropped.append(rec)
    return kept, dropped
