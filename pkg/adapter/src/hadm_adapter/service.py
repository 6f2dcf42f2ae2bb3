"""The adapter HTTP service: routes protocol requests to the configured
engines with serialized model access."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .engines import DetectorEngine, InpaintEngine
from .wire import (
    DetectRequest,
    InpaintRequest,
    WireError,
    canonical_json,
    detect_response,
    inpaint_response,
    validate_detections,
)

IMAGE_EXTENSIONS = ("", ".png", ".jpg", ".jpeg")
BOUNDS_TOLERANCE_PX = 1.0


@dataclass
class AdapterBackend:
    """Engine wiring plus image-ref resolution rooted at ``images_root``.

    Model access is serialized through one lock per engine; the HTTP layer
    stays threaded so clients can still issue concurrent requests.
    """

    images_root: Path
    detector: DetectorEngine
    inpainter: InpaintEngine | None = None
    model_tag: str = "hadm-adapter"
    _detect_lock: threading.Lock = field(default_factory=threading.Lock)
    _inpaint_lock: threading.Lock = field(default_factory=threading.Lock)

    def resolve_image(self, image_ref: str) -> Path:
        root = self.images_root.resolve()
        for ext in IMAGE_EXTENSIONS:
            candidate = (root / (image_ref + ext)).resolve()
            if root not in candidate.parents and candidate != root:
                raise WireError("invalid_request", f"image ref escapes the images root: {image_ref!r}")
            if candidate.is_file():
                return candidate
        raise WireError("unknown_image", f"unknown image ref {image_ref!r}", 404)

    def handle_detect(self, doc: dict) -> dict:
        req = DetectRequest.from_wire(doc)
        path = self.resolve_image(req.image_ref)
        with self._detect_lock:
            raw = self.detector.detect(path, req.mode, req.score_threshold)
        return detect_response(validate_detections(raw, req), self.model_tag)

    def handle_inpaint(self, doc: dict) -> dict:
        req = InpaintRequest.from_wire(doc)
        if self.inpainter is None:
            raise WireError(
                "inpaint_unavailable", "no inpainting model is configured", 503
            )
        path = self.resolve_image(req.image_ref)
        self._check_bounds(req, path)
        with self._inpaint_lock:
            out_path = self.inpainter.inpaint(
                path, req.box, req.prompt, req.negative_prompt, req.seed, req.settings
            )
        return inpaint_response(self._ref_for(out_path), req.seed)

    def _check_bounds(self, req: InpaintRequest, path: Path) -> None:
        from PIL import Image

        with Image.open(path) as img:
            width, height = img.size
        x, y, w, h = req.box
        if (
            x < -BOUNDS_TOLERANCE_PX
            or y < -BOUNDS_TOLERANCE_PX
            or x + w > width + BOUNDS_TOLERANCE_PX
            or y + h > height + BOUNDS_TOLERANCE_PX
        ):
            raise WireError(
                "invalid_box",
                f"box {list(req.box)} outside image bounds {width}x{height}",
            )

    def _ref_for(self, path: Path) -> str:
        root = self.images_root.resolve()
        resolved = path.resolve()
        try:
            return str(resolved.relative_to(root))
        except ValueError:
            return str(resolved)


class _Handler(BaseHTTPRequestHandler):
    server_version = "hadm-adapter/1"
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    @property
    def backend(self) -> AdapterBackend:
        return self.server.backend  # type: ignore[attr-defined]

    def _send_json(self, status: int, payload: dict) -> None:
        body = canonical_json(payload)
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        if self.path == "/healthz":
            body = b"ok"
            self.send_response(200)
            self.send_header("Content-Type", "text/plain")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
        else:
            err = WireError("not_found", f"no such endpoint {self.path!r}", 404)
            self._send_json(err.http_status, err.envelope())

    def do_POST(self) -> None:
        try:
            length = int(self.headers.get("Content-Length", 0))
            raw = self.rfile.read(length)
            try:
                doc = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise WireError("invalid_request", f"malformed JSON: {exc}")
            if not isinstance(doc, dict):
                raise WireError("invalid_request", "request body must be a JSON object")
            if self.path == "/detect":
                payload = self.backend.handle_detect(doc)
            elif self.path == "/inpaint":
                payload = self.backend.handle_inpaint(doc)
            else:
                raise WireError("not_found", f"no such endpoint {self.path!r}", 404)
        except WireError as err:
            self._send_json(err.http_status, err.envelope())
            return
        except Exception as exc:  # engine crash: keep the envelope contract
            err = WireError("engine_error", f"unhandled engine failure: {exc}", 500)
            self._send_json(err.http_status, err.envelope())
            return
        self._send_json(200, payload)


class AdapterServer:
    def __init__(self, backend: AdapterBackend, port: int = 0, host: str = "127.0.0.1"):
        self._httpd = ThreadingHTTPServer((host, port), _Handler)
        self._httpd.backend = backend  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "AdapterServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def __enter__(self) -> "AdapterServer":
        return self.start()

    def __exit__(self, *exc) -> None:
        self.stop()
