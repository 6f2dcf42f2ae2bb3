"""Adapter entry point: configure engines and serve the protocol."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engines import ProceduralInpaintEngine, SidecarDetectorEngine
from .service import AdapterBackend, AdapterServer


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hadm-adapter",
        description="Serve detector/inpainter models behind the artifact backend protocol.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--images-root", help="directory image refs resolve against")
    parser.add_argument("--output-dir", help="where inpainted images are written")
    parser.add_argument("--port", type=int, default=8701, help="port to bind")
    parser.add_argument(
        "--detector",
        choices=["sidecar", "torchvision"],
        default="sidecar",
        help="detector engine",
    )
    parser.add_argument(
        "--inpainter",
        choices=["procedural", "diffusers", "none"],
        default="procedural",
        help="inpaint engine ('none' degrades to detect-only)",
    )
    parser.add_argument("--arch", default="fasterrcnn_mobilenet_v3_large_fpn",
                        help="torchvision detector architecture")
    parser.add_argument("--local-checkpoint", help="checkpoint for the local-mode detector")
    parser.add_argument("--global-checkpoint", help="checkpoint for the global-mode detector")
    parser.add_argument("--inpaint-model", help="diffusers model id for the inpainter")
    parser.add_argument("--device", default="cpu", help="torch device")
    parser.add_argument("--model-tag", default="hadm-adapter", help="tag echoed in responses")
    return parser


def build_backend(args) -> AdapterBackend:
    if not args.images_root:
        raise SystemExit("error: --images-root (or config images_root) is required")
    images_root = Path(args.images_root)
    output_dir = Path(args.output_dir) if args.output_dir else images_root / "outputs"

    if args.detector == "sidecar":
        detector = SidecarDetectorEngine()
    else:
        from .torch_engines import TorchvisionDetectorEngine

        checkpoints = {}
        if args.local_checkpoint:
            checkpoints["local"] = args.local_checkpoint
        if args.global_checkpoint:
            checkpoints["global"] = args.global_checkpoint
        detector = TorchvisionDetectorEngine(
            arch=args.arch, checkpoints=checkpoints, device=args.device
        )

    if args.inpainter == "none":
        inpainter = None
    elif args.inpainter == "diffusers":
        from .diffusion import DEFAULT_MODEL_ID, DiffusersInpaintEngine

        inpainter = DiffusersInpaintEngine(
            model_id=args.inpaint_model or DEFAULT_MODEL_ID,
            device=args.device,
            output_dir=output_dir,
        )
    else:
        inpainter = ProceduralInpaintEngine(output_dir)

    return AdapterBackend(
        images_root=images_root,
        detector=detector,
        inpainter=inpainter,
        model_tag=args.model_tag,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        config = json.loads(Path(args.config).read_text(encoding="utf-8"))
        for key, value in config.items():
            dest = key.replace("-", "_")
            if getattr(args, dest, None) in (None, parser.get_default(dest)):
                setattr(args, dest, value)
    backend = build_backend(args)
    server = AdapterServer(backend, port=args.port)
    sys.stdout.write(f"adapter listening on {server.base_url}\n")
    sys.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
