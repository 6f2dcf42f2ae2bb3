"""Detector/inpainter wire protocol, a fixture-driven mock backend, and the
HTTP client the corrector uses.

Transport is HTTP/1.1 + JSON with snake_case fields and a ``protocol_version``
of "1": ``POST /detect``, ``POST /inpaint``, ``GET /healthz``; failures use
the error envelope ``{"code", "message"}``. Response bodies are canonical
JSON (sorted keys), so a fixed fixture yields byte-identical responses.

The mock needs no pixels: an inpaint returns a synthetic child ref encoding
``(parent, box, seed)``, and detecting a child ref replays the scripted
rescore chain, so the whole correction loop runs as pure bookkeeping.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from threading import Thread

import requests

from .corpus import Box, DetectionInstance
from .corrector import InpaintParams
from .metrics import iou
from .taxonomy import Mode, class_from_id

PROTOCOL_VERSION = "1"
DEFAULT_SCORE_THRESHOLD = 0.05

# Separators for synthetic child refs: parent|x,y,w,h;seed
_OP_SEP = "|"


class ProtocolError(Exception):
    """A protocol-level failure carrying the error-envelope code."""

    def __init__(self, code: str, message: str, http_status: int = 400):
        super().__init__(message)
        self.code = code
        self.http_status = http_status

    def envelope(self) -> dict:
        return {"code": self.code, "message": str(self)}


def canonical_json(payload: dict) -> bytes:
    return json.dumps(payload, sort_keys=True).encode("utf-8")


def _get(doc: dict, key: str, kind=None):
    if key not in doc:
        raise ProtocolError("invalid_request", f"missing field {key!r}")
    value = doc[key]
    if kind is not None and not isinstance(value, kind):
        raise ProtocolError("invalid_request", f"field {key!r} has wrong type")
    return value


def _check_version(doc: dict) -> None:
    version = doc.get("protocol_version", PROTOCOL_VERSION)
    if version != PROTOCOL_VERSION:
        raise ProtocolError(
            "unsupported_protocol", f"protocol_version {version!r} not supported"
        )


def _parse_wire_box(raw) -> Box:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ProtocolError("invalid_box", "box must be a [x, y, w, h] array")
    try:
        return Box(*(float(v) for v in raw))
    except (TypeError, ValueError) as exc:
        raise ProtocolError("invalid_box", f"malformed box: {exc}")


@dataclass(frozen=True)
class DetectRequest:
    image_ref: str
    mode: Mode
    score_threshold: float = DEFAULT_SCORE_THRESHOLD

    def __post_init__(self) -> None:
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ValueError(f"score_threshold must be in [0, 1], got {self.score_threshold}")

    def to_wire(self) -> dict:
        return {
            "protocol_version": PROTOCOL_VERSION,
            "image_ref": self.image_ref,
            "mode": self.mode.value,
            "score_threshold": self.score_threshold,
        }

    @classmethod
    def from_wire(cls, doc: dict) -> "DetectRequest":
        _check_version(doc)
        try:
            mode = Mode(_get(doc, "mode", str))
        except ValueError:
            raise ProtocolError("invalid_request", f"unknown mode {doc.get('mode')!r}")
        threshold = doc.get("score_threshold", DEFAULT_SCORE_THRESHOLD)
        if not isinstance(threshold, (int, float)) or not 0.0 <= threshold <= 1.0:
            raise ProtocolError("invalid_request", "score_threshold must be in [0, 1]")
        return cls(
            image_ref=_get(doc, "image_ref", str),
            mode=mode,
            score_threshold=float(threshold),
        )


@dataclass(frozen=True)
class WireDetection:
    bbox: tuple[float, float, float, float]
    category_id: int
    score: float

    def to_wire(self) -> dict:
        return {"bbox": list(self.bbox), "category_id": self.category_id, "score": self.score}

    @classmethod
    def from_wire(cls, doc: dict) -> "WireDetection":
        box = _parse_wire_box(_get(doc, "bbox"))
        return cls(
            bbox=(box.x, box.y, box.w, box.h),
            category_id=int(_get(doc, "category_id", (int,))),
            score=float(_get(doc, "score", (int, float))),
        )

    @property
    def box(self) -> Box:
        return Box(*self.bbox)


@dataclass(frozen=True)
class DetectResponse:
    detections: tuple[WireDetection, ...]
    model_tag: str

    def to_wire(self) -> dict:
        return {
            "protocol_version": PROTOCOL_VERSION,
            "detections": [d.to_wire() for d in self.detections],
            "model_tag": self.model_tag,
        }

    @classmethod
    def from_wire(cls, doc: dict) -> "DetectResponse":
        _check_version(doc)
        return cls(
            detections=tuple(WireDetection.from_wire(d) for d in _get(doc, "detections", list)),
            model_tag=_get(doc, "model_tag", str),
        )


@dataclass(frozen=True)
class InpaintRequest:
    image_ref: str
    box: Box
    prompt: str
    seed: int
    negative_prompt: str | None = None
    params: InpaintParams = InpaintParams()

    def to_wire(self) -> dict:
        doc = {
            "protocol_version": PROTOCOL_VERSION,
            "image_ref": self.image_ref,
            "box": self.box.as_list(),
            "prompt": self.prompt,
            "seed": self.seed,
            "params": self.params.as_dict(),
        }
        if self.negative_prompt is not None:
            doc["negative_prompt"] = self.negative_prompt
        return doc

    @classmethod
    def from_wire(cls, doc: dict) -> "InpaintRequest":
        _check_version(doc)
        params_doc = doc.get("params", {})
        if not isinstance(params_doc, dict):
            raise ProtocolError("invalid_request", "params must be an object")
        try:
            params = InpaintParams(
                guidance_scale=float(params_doc.get("guidance_scale", 8.0)),
                strength=float(params_doc.get("strength", 0.99)),
                steps=int(params_doc.get("steps", 30)),
                n_seeds=int(params_doc.get("n_seeds", 20)),
            )
        except (TypeError, ValueError) as exc:
            raise ProtocolError("invalid_request", f"bad params: {exc}")
        seed = _get(doc, "seed", (int,))
        negative = doc.get("negative_prompt")
        if negative is not None and not isinstance(negative, str):
            raise ProtocolError("invalid_request", "negative_prompt must be a string")
        return cls(
            image_ref=_get(doc, "image_ref", str),
            box=_parse_wire_box(_get(doc, "box")),
            prompt=_get(doc, "prompt", str),
            seed=int(seed),
            negative_prompt=negative,
            params=params,
        )


@dataclass(frozen=True)
class InpaintResponse:
    image_ref: str
    seed: int

    def to_wire(self) -> dict:
        return {
            "protocol_version": PROTOCOL_VERSION,
            "image_ref": self.image_ref,
            "seed": self.seed,
        }

    @classmethod
    def from_wire(cls, doc: dict) -> "InpaintResponse":
        _check_version(doc)
        return cls(
            image_ref=_get(doc, "image_ref", str), seed=int(_get(doc, "seed", (int,)))
        )


def _format_float(v: float) -> str:
    return repr(float(v))


def encode_child_ref(parent: str, box: Box, seed: int) -> str:
    op = ",".join(_format_float(v) for v in box.as_list()) + f";{seed}"
    return f"{parent}{_OP_SEP}{op}"


def decode_ref(ref: str) -> tuple[str, list[tuple[Box, int]]]:
    """Split a (possibly synthetic) image ref into its base id and the chain
    of (box, seed) inpaint operations applied to it."""
    parts = ref.split(_OP_SEP)
    base = parts[0]
    ops: list[tuple[Box, int]] = []
    for part in parts[1:]:
        try:
            coords, seed = part.split(";")
            x, y, w, h = (float(v) for v in coords.split(","))
            ops.append((Box(x, y, w, h), int(seed)))
        except (ValueError, TypeError):
            raise ProtocolError("invalid_request", f"malformed synthetic image ref {ref!r}")
    return base, ops


@dataclass(frozen=True)
class ScriptedFixture:
    """Deterministic mock behavior: base detections per (image, mode) and a
    per-seed rescore factor applied to detections overlapping an inpainted
    box."""

    images: dict[str, dict[Mode, tuple[WireDetection, ...]]]
    seed_factors: tuple[float, ...]
    model_tag: str = "mock"
    op_iou: float = 0.3

    @classmethod
    def from_dict(cls, doc: dict) -> "ScriptedFixture":
        images: dict[str, dict[Mode, tuple[WireDetection, ...]]] = {}
        for image_id, by_mode in doc.get("images", {}).items():
            if _OP_SEP in image_id:
                raise ValueError(f"fixture image id {image_id!r} may not contain {_OP_SEP!r}")
            entry: dict[Mode, tuple[WireDetection, ...]] = {}
            for mode in Mode:
                dets = by_mode.get(mode.value, [])
                entry[mode] = tuple(WireDetection.from_wire(d) for d in dets)
            images[image_id] = entry
        factors = tuple(float(f) for f in doc.get("seed_factors", []))
        if not factors:
            raise ValueError("fixture must define at least one seed factor")
        return cls(
            images=images,
            seed_factors=factors,
            model_tag=doc.get("model_tag", "mock"),
            op_iou=float(doc.get("op_iou", 0.3)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedFixture":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def resolve(self, image_ref: str, mode: Mode) -> tuple[WireDetection, ...]:
        """Detections for a ref, replaying any encoded inpaint operations."""
        base, ops = decode_ref(image_ref)
        if base not in self.images:
            raise ProtocolError("unknown_image", f"unknown image ref {base!r}", http_status=404)
        dets = list(self.images[base][mode])
        for op_box, seed in ops:
            factor = self._factor(seed)
            dets = [
                WireDetection(
                    bbox=d.bbox,
                    category_id=d.category_id,
                    score=min(d.score * factor, 1.0) if iou(d.box, op_box) >= self.op_iou else d.score,
                )
                for d in dets
            ]
        return tuple(sorted(dets, key=lambda d: (-d.score, d.category_id, d.bbox)))

    def _factor(self, seed: int) -> float:
        if not 0 <= seed < len(self.seed_factors):
            raise ProtocolError(
                "bad_seed",
                f"seed {seed} out of fixture domain 0..{len(self.seed_factors) - 1}",
            )
        return self.seed_factors[seed]


def mock_detect(req: DetectRequest, fixture: ScriptedFixture) -> DetectResponse:
    """Scripted detection lookup, filtered by the request threshold."""
    dets = tuple(d for d in fixture.resolve(req.image_ref, req.mode) if d.score >= req.score_threshold)
    return DetectResponse(detections=dets, model_tag=fixture.model_tag)


def mock_inpaint(req: InpaintRequest, fixture: ScriptedFixture) -> InpaintResponse:
    """Scripted inpaint: returns a synthetic child ref whose later detects
    replay the seeded rescore."""
    base, _ = decode_ref(req.image_ref)
    if base not in fixture.images:
        raise ProtocolError("unknown_image", f"unknown image ref {base!r}", http_status=404)
    fixture._factor(req.seed)  # validate seed domain
    child = encode_child_ref(req.image_ref, req.box, req.seed)
    return InpaintResponse(image_ref=child, seed=req.seed)


class MockBackend:
    """In-process mock implementing both the wire operations and the
    corrector-facing convenience interface."""

    def __init__(self, fixture: ScriptedFixture):
        self.fixture = fixture

    def detect_wire(self, req: DetectRequest) -> DetectResponse:
        return mock_detect(req, self.fixture)

    def inpaint_wire(self, req: InpaintRequest) -> InpaintResponse:
        return mock_inpaint(req, self.fixture)

    def detect(
        self, image_ref: str, mode: Mode, score_threshold: float = DEFAULT_SCORE_THRESHOLD
    ) -> list[DetectionInstance]:
        resp = self.detect_wire(DetectRequest(image_ref, mode, score_threshold))
        return wire_to_instances(resp, image_ref, mode)

    def inpaint(
        self,
        image_ref: str,
        box: Box,
        prompt: str,
        negative_prompt: str | None,
        seed: int,
        params: InpaintParams,
    ) -> str:
        resp = self.inpaint_wire(
            InpaintRequest(
                image_ref=image_ref,
                box=box,
                prompt=prompt,
                seed=seed,
                negative_prompt=negative_prompt,
                params=params,
            )
        )
        return resp.image_ref


def wire_to_instances(
    resp: DetectResponse, image_ref: str, mode: Mode
) -> list[DetectionInstance]:
    return [
        DetectionInstance(
            image_id=image_ref,
            cls=class_from_id(mode, d.category_id),
            box=d.box,
            score=d.score,
        )
        for d in resp.detections
    ]


class _Handler(BaseHTTPRequestHandler):
    server_version = "artifact-mock/1"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):  # noqa: A003 - silence request logging
        pass

    @property
    def backend(self) -> MockBackend:
        return self.server.backend  # type: ignore[attr-defined]

    def _send_json(self, status: int, payload: dict) -> None:
        body = canonical_json(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_envelope(self, err: ProtocolError) -> None:
        self._send_json(err.http_status, err.envelope())

    def do_GET(self) -> None:
        if self.path == "/healthz":
            body = b"ok"
            self.send_response(200)
            self.send_header("Content-Type", "text/plain")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        else:
            self._send_error_envelope(
                ProtocolError("not_found", f"no such endpoint {self.path!r}", http_status=404)
            )

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", 0))
        raw = self.rfile.read(length)
        try:
            doc = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ProtocolError("invalid_request", f"malformed JSON: {exc}")
        if not isinstance(doc, dict):
            raise ProtocolError("invalid_request", "request body must be a JSON object")
        return doc

    def do_POST(self) -> None:
        try:
            doc = self._read_body()
            if self.path == "/detect":
                resp = self.backend.detect_wire(DetectRequest.from_wire(doc))
            elif self.path == "/inpaint":
                resp = self.backend.inpaint_wire(InpaintRequest.from_wire(doc))
            else:
                raise ProtocolError(
                    "not_found", f"no such endpoint {self.path!r}", http_status=404
                )
        except ProtocolError as err:
            self._send_error_envelope(err)
            return
        self._send_json(200, resp.to_wire())


class MockServer:
    """The mock backend served over real sockets (threaded, shareable)."""

    def __init__(self, fixture: ScriptedFixture, port: int = 0, host: str = "127.0.0.1"):
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.backend = MockBackend(fixture)  # type: ignore[attr-defined]
        self._thread: Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "MockServer":
        self._thread = Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def __enter__(self) -> "MockServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()


def serve(port: int, fixture: ScriptedFixture) -> MockServer:
    """Start the mock service on ``port`` (0 picks a free one)."""
    return MockServer(fixture, port=port).start()


class BackendError(RuntimeError):
    """An error envelope returned by the backend."""

    def __init__(self, code: str, message: str, http_status: int):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.http_status = http_status


class BackendUnreachable(RuntimeError):
    """The backend could not be reached within the retry budget."""


class HttpBackendClient:
    """HTTP client for any service speaking the detect/inpaint protocol."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 60.0,
        retries: int = 2,
        retry_wait: float = 0.2,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.retry_wait = retry_wait
        self._session = requests.Session()

    def _post(self, path: str, payload: dict) -> dict:
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            try:
                resp = self._session.post(
                    f"{self.base_url}{path}", json=payload, timeout=self.timeout
                )
                break
            except requests.RequestException as exc:
                last = exc
                if attempt < self.retries:
                    time.sleep(self.retry_wait * (attempt + 1))
        else:
            raise BackendUnreachable(f"POST {path} failed after {self.retries + 1} attempts: {last}")
        try:
            doc = resp.json()
        except ValueError:
            raise BackendError("invalid_response", "backend returned non-JSON body", resp.status_code)
        if resp.status_code != 200:
            raise BackendError(
                doc.get("code", "unknown_error"),
                doc.get("message", "backend error"),
                resp.status_code,
            )
        return doc

    def healthz(self) -> bool:
        try:
            resp = self._session.get(f"{self.base_url}/healthz", timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendUnreachable(f"GET /healthz failed: {exc}")
        return resp.status_code == 200

    def detect_wire(self, req: DetectRequest) -> DetectResponse:
        return DetectResponse.from_wire(self._post("/detect", req.to_wire()))

    def inpaint_wire(self, req: InpaintRequest) -> InpaintResponse:
        return InpaintResponse.from_wire(self._post("/inpaint", req.to_wire()))

    def detect(
        self, image_ref: str, mode: Mode, score_threshold: float = DEFAULT_SCORE_THRESHOLD
    ) -> list[DetectionInstance]:
        resp = self.detect_wire(DetectRequest(image_ref, mode, score_threshold))
        return wire_to_instances(resp, image_ref, mode)

    def inpaint(
        self,
        image_ref: str,
        box: Box,
        prompt: str,
        negative_prompt: str | None,
        seed: int,
        params: InpaintParams,
    ) -> str:
        resp = self.inpaint_wire(
            InpaintRequest(
                image_ref=image_ref,
                box=box,
                prompt=prompt,
                seed=seed,
                negative_prompt=negative_prompt,
                params=params,
            )
        )
        return resp.image_ref
