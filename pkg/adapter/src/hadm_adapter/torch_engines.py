"""Torch-backed detector engine.

Loads one torchvision detection model per mode (6 local classes, 12 global
classes, plus background) from optional checkpoint files. The published
artifact-detector weights use a ViTDet/Cascade-RCNN stack whose loader lives
in its own codebase; wrap that loader in the same ``DetectorEngine``
protocol to serve it here. This engine covers torchvision-format
checkpoints and gives a runnable CPU path.
"""

from __future__ import annotations

from pathlib import Path

from .wire import WireError

ARCHS = ("fasterrcnn_mobilenet_v3_large_fpn", "fasterrcnn_resnet50_fpn")
NUM_CLASSES = {"local": 6, "global": 12}


class TorchvisionDetectorEngine:
    def __init__(
        self,
        arch: str = "fasterrcnn_mobilenet_v3_large_fpn",
        checkpoints: dict[str, str | Path] | None = None,
        device: str = "cpu",
    ):
        try:
            import torch
            import torchvision.models.detection as det_models
        except ImportError as exc:
            raise WireError(
                "engine_error", f"torch/torchvision not installed: {exc}", 500
            )
        if arch not in ARCHS:
            raise ValueError(f"unknown arch {arch!r} (choose from {ARCHS})")
        self._torch = torch
        self.device = torch.device(device)
        self.models = {}
        builder = getattr(det_models, arch)
        for mode, n_classes in NUM_CLASSES.items():
            model = builder(weights=None, weights_backbone=None, num_classes=n_classes + 1)
            ckpt = (checkpoints or {}).get(mode)
            if ckpt:
                state = torch.load(ckpt, map_location=self.device, weights_only=True)
                model.load_state_dict(state)
            model.eval()
            model.to(self.device)
            self.models[mode] = model

    def detect(self, image_path: Path, mode: str, score_threshold: float) -> list[dict]:
        from PIL import Image

        torch = self._torch
        with Image.open(image_path) as src:
            img = src.convert("RGB")
        tensor = torch.frombuffer(bytearray(img.tobytes()), dtype=torch.uint8)
        tensor = tensor.reshape(img.height, img.width, 3).permute(2, 0, 1).float() / 255.0
        with torch.inference_mode():
            (output,) = self.models[mode]([tensor.to(self.device)])
        detections = []
        for (x0, y0, x1, y1), label, score in zip(
            output["boxes"].tolist(), output["labels"].tolist(), output["scores"].tolist()
        ):
            if score < score_threshold:
                continue
            detections.append(
                {
                    "bbox": [x0, y0, x1 - x0, y1 - y0],
                    "category_id": int(label),
                    "score": float(score),
                }
            )
        return detections
