"""Engine interfaces and the zero-dependency reference engines.

The service routes wire requests to a detector engine per mode and one
inpaint engine; any object matching the protocols below can be plugged in.
The sidecar detector replays precomputed detections stored next to each
image; the procedural inpainter performs a deterministic pixel edit so the
full pipeline (including byte-determinism guarantees) can run without any
model weights.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Protocol

from PIL import Image

from .wire import InpaintSettings, WireError


class DetectorEngine(Protocol):
    def detect(self, image_path: Path, mode: str, score_threshold: float) -> list[dict]:
        """Return detections as {bbox: [x,y,w,h], category_id, score} dicts."""
        ...


class InpaintEngine(Protocol):
    def inpaint(
        self,
        image_path: Path,
        box: tuple[float, float, float, float],
        prompt: str,
        negative_prompt: str | None,
        seed: int,
        settings: InpaintSettings,
    ) -> Path:
        """Repaint the box region and return the new image's path. Must be
        byte-deterministic for identical inputs (fixed-seed sampling)."""
        ...


SIDECAR_SUFFIX = ".detections.json"


class SidecarDetectorEngine:
    """Serves detections from ``<image>.detections.json`` sidecar files
    holding ``{"local": [...], "global": [...]}``. Images without a sidecar
    detect as clean."""

    def detect(self, image_path: Path, mode: str, score_threshold: float) -> list[dict]:
        sidecar = image_path.with_name(image_path.name + SIDECAR_SUFFIX)
        if not sidecar.exists():
            return []
        try:
            doc = json.loads(sidecar.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise WireError("engine_error", f"unreadable sidecar {sidecar.name}: {exc}", 500)
        return list(doc.get(mode, []))


class ProceduralInpaintEngine:
    """Deterministic stand-in inpainter: repaints the box with a color and
    blend derived purely from the request, so equal requests yield
    byte-identical PNGs."""

    def __init__(self, output_dir: Path):
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)

    def inpaint(
        self,
        image_path: Path,
        box: tuple[float, float, float, float],
        prompt: str,
        negative_prompt: str | None,
        seed: int,
        settings: InpaintSettings,
    ) -> Path:
        digest = hashlib.sha256(
            json.dumps(
                {
                    "source": image_path.name,
                    "box": list(box),
                    "prompt": prompt,
                    "negative_prompt": negative_prompt,
                    "seed": seed,
                    "settings": [
                        settings.guidance_scale,
                        settings.strength,
                        settings.steps,
                        settings.n_seeds,
                    ],
                },
                sort_keys=True,
            ).encode("utf-8")
        ).hexdigest()
        out_path = self.output_dir / f"inpaint-{digest[:20]}.png"
        if out_path.exists():
            return out_path

        with Image.open(image_path) as src:
            img = src.convert("RGB")
        x, y, w, h = box
        x0 = max(int(x), 0)
        y0 = max(int(y), 0)
        x1 = min(int(x + w), img.width)
        y1 = min(int(y + h), img.height)
        if x1 > x0 and y1 > y0:
            color_seed = hashlib.sha256(f"{prompt}|{seed}".encode("utf-8")).digest()
            fill = tuple(color_seed[:3])
            patch = Image.new("RGB", (x1 - x0, y1 - y0), fill)
            alpha = int(255 * settings.strength)
            mask = Image.new("L", patch.size, alpha)
            img.paste(patch, (x0, y0), mask)
        img.save(out_path, format="PNG")
        return out_path
