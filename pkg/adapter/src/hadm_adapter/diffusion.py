"""Diffusion-backed inpaint engine (requires the ``diffusion`` extra).

Runs a diffusers inpainting pipeline with fixed-seed generators so repeated
requests are reproducible; determinism is enforced even at performance cost
because the corrector's audit trail depends on it.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .wire import InpaintSettings, WireError

DEFAULT_MODEL_ID = "diffusers/stable-diffusion-xl-1.0-inpainting-0.1"


class DiffusersInpaintEngine:
    def __init__(self, model_id: str = DEFAULT_MODEL_ID, device: str = "cpu", output_dir: Path = Path("outputs")):
        try:
            import torch
            from diffusers import AutoPipelineForInpainting
        except ImportError as exc:
            raise WireError(
                "engine_error",
                f"diffusers not installed (pip install 'hadm-adapter[diffusion]'): {exc}",
                500,
            )
        self._torch = torch
        self.device = device
        self.output_dir = Path(output_dir)
        self.output_dir.mkdir(parents=True, exist_ok=True)
        self.pipe = AutoPipelineForInpainting.from_pretrained(model_id)
        self.pipe.to(device)

    def inpaint(
        self,
        image_path: Path,
        box: tuple[float, float, float, float],
        prompt: str,
        negative_prompt: str | None,
        seed: int,
        settings: InpaintSettings,
    ) -> Path:
        from PIL import Image, ImageDraw

        with Image.open(image_path) as src:
            img = src.convert("RGB")
        mask = Image.new("L", img.size, 0)
        draw = ImageDraw.Draw(mask)
        x, y, w, h = box
        draw.rectangle([x, y, x + w, y + h], fill=255)

        generator = self._torch.Generator(self.device).manual_seed(seed)
        result = self.pipe(
            prompt=prompt,
            negative_prompt=negative_prompt,
            image=img,
            mask_image=mask,
            guidance_scale=settings.guidance_scale,
            strength=settings.strength,
            num_inference_steps=settings.steps,
            generator=generator,
        ).images[0]

        digest = hashlib.sha256(
            f"{image_path.name}|{box}|{prompt}|{negative_prompt}|{seed}".encode("utf-8")
        ).hexdigest()
        out_path = self.output_dir / f"inpaint-{digest[:20]}.png"
        result.save(out_path, format="PNG")
        return out_path
