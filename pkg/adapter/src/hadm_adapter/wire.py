"""Wire schema for the detect/inpaint protocol, version "1".

This is an independent implementation of the JSON contract the evaluation
toolkit's backends speak: snake_case fields, canonical (sorted-key) response
encoding, and the ``{code, message}`` error envelope. Field rules must stay
byte-compatible with the protocol goldens.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

PROTOCOL_VERSION = "1"
DEFAULT_SCORE_THRESHOLD = 0.05

LOCAL_CLASS_RANGE = range(1, 7)
GLOBAL_CLASS_RANGE = range(1, 13)


class WireError(Exception):
    """Protocol failure carrying the envelope code and HTTP status."""

    def __init__(self, code: str, message: str, http_status: int = 400):
        super().__init__(message)
        self.code = code
        self.http_status = http_status

    def envelope(self) -> dict:
        return {"code": self.code, "message": str(self)}


def canonical_json(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True).encode("utf-8")


def _require(doc: dict, key: str, kind=None):
    if key not in doc:
        raise WireError("invalid_request", f"missing field {key!r}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise WireError("invalid_request", f"field {key!r} has wrong type")
    return value


def _check_version(doc: dict) -> None:
    version = doc.get("protocol_version", PROTOCOL_VERSION)
    if version != PROTOCOL_VERSION:
        raise WireError("unsupported_protocol", f"protocol_version {version!r} not supported")


def parse_box(raw) -> tuple[float, float, float, float]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise WireError("invalid_box", "box must be a [x, y, w, h] array")
    try:
        x, y, w, h = (float(v) for v in raw)
    except (TypeError, ValueError) as exc:
        raise WireError("invalid_box", f"malformed box: {exc}")
    if w < 0 or h < 0:
        raise WireError("invalid_box", "box size must be non-negative")
    return x, y, w, h


@dataclass(frozen=True)
class DetectRequest:
    image_ref: str
    mode: str
    score_threshold: float = DEFAULT_SCORE_THRESHOLD

    @classmethod
    def from_wire(cls, doc: dict) -> "DetectRequest":
        _check_version(doc)
        mode = _require(doc, "mode", str)
        if mode not in ("local", "global"):
            raise WireError("invalid_request", f"unknown mode {mode!r}")
        threshold = doc.get("score_threshold", DEFAULT_SCORE_THRESHOLD)
        if not isinstance(threshold, (int, float)) or not 0.0 <= threshold <= 1.0:
            raise WireError("invalid_request", "score_threshold must be in [0, 1]")
        return cls(
            image_ref=_require(doc, "image_ref", str),
            mode=mode,
            score_threshold=float(threshold),
        )

    @property
    def class_range(self) -> range:
        return LOCAL_CLASS_RANGE if self.mode == "local" else GLOBAL_CLASS_RANGE


@dataclass(frozen=True)
class InpaintSettings:
    guidance_scale: float = 8.0
    strength: float = 0.99
    steps: int = 30
    n_seeds: int = 20


@dataclass(frozen=True)
class InpaintRequest:
    image_ref: str
    box: tuple[float, float, float, float]
    prompt: str
    seed: int
    negative_prompt: str | None = None
    settings: InpaintSettings = field(default_factory=InpaintSettings)

    @classmethod
    def from_wire(cls, doc: dict) -> "InpaintRequest":
        _check_version(doc)
        params = doc.get("params", {})
        if not isinstance(params, dict):
            raise WireError("invalid_request", "params must be an object")
        try:
            settings = InpaintSettings(
                guidance_scale=float(params.get("guidance_scale", 8.0)),
                strength=float(params.get("strength", 0.99)),
                steps=int(params.get("steps", 30)),
                n_seeds=int(params.get("n_seeds", 20)),
            )
        except (TypeError, ValueError) as exc:
            raise WireError("invalid_request", f"bad params: {exc}")
        negative = doc.get("negative_prompt")
        if negative is not None and not isinstance(negative, str):
            raise WireError("invalid_request", "negative_prompt must be a string")
        return cls(
            image_ref=_require(doc, "image_ref", str),
            box=parse_box(_require(doc, "box")),
            prompt=_require(doc, "prompt", str),
            seed=int(_require(doc, "seed", int)),
            negative_prompt=negative,
            settings=settings,
        )


def detect_response(detections: list[dict], model_tag: str) -> dict:
    return {
        "protocol_version": PROTOCOL_VERSION,
        "detections": detections,
        "model_tag": model_tag,
    }


def inpaint_response(image_ref: str, seed: int) -> dict:
    return {"protocol_version": PROTOCOL_VERSION, "image_ref": image_ref, "seed": seed}


def validate_detections(detections: list[dict], req: DetectRequest) -> list[dict]:
    """Enforce the response invariants on engine output: valid category ids
    for the mode, scores in [0, 1] at or above the request threshold, and
    well-formed boxes. Violations are engine bugs, not client errors."""
    out = []
    for det in detections:
        try:
            cid = int(det["category_id"])
            score = float(det["score"])
            box = parse_box(det["bbox"])
        except (KeyError, TypeError, ValueError, WireError) as exc:
            raise WireError("engine_error", f"engine produced malformed detection: {exc}", 500)
        if cid not in req.class_range:
            raise WireError(
                "engine_error",
                f"engine produced category id {cid} outside {req.mode} mode",
                500,
            )
        if not 0.0 <= score <= 1.0:
            raise WireError("engine_error", f"engine produced score {score}", 500)
        if score < req.score_threshold:
            continue
        out.append({"bbox": list(box), "category_id": cid, "score": score})
    out.sort(key=lambda d: (-d["score"], d["category_id"], d["bbox"]))
    return out
