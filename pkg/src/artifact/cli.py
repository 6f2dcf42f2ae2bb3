"""Command-line interface.

Subcommands: ``evaluate`` (per-class AP50 report), ``auc`` (method
comparison via the classification reframing), ``stats`` (dataset and
prediction statistics), ``select-feedback`` (top-k% feedback manifest),
``correct`` (iterative inpainting against a backend), ``mock-serve`` (run
the scripted mock backend).

Reports print a human table to stdout; ``--out`` additionally writes the
machine JSON, with figures and CSVs rendered alongside it. Exit codes:
0 success, 1 validation error, 2 residual artifacts after correction,
3 backend failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import backend as backend_mod
from . import corrector as corrector_mod
from . import feedback as feedback_mod
from . import figures as figures_mod
from . import report as report_mod
from .corpus import Box, DetectionInstance, ManifestError, load_detections, load_ground_truth
from .metrics import evaluate as evaluate_metrics
from .metrics import prediction_stats
from .taxonomy import Mode, class_from_id

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RESIDUAL = 2
EXIT_BACKEND = 3

BACKEND_URL_ENV = "HADM_BACKEND_URL"


def _read_config(path: str) -> dict[str, str]:
    """TOML-like key=value pairs, '#' comments, one per line."""
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        values[key.strip().replace("-", "_")] = value.strip().strip("\"'")
    return values


def _apply_config(sub: argparse.ArgumentParser, config: dict[str, str]) -> None:
    defaults = {}
    for action in sub._actions:
        if action.dest in config:
            raw = config[action.dest]
            if action.type is not None:
                raw = action.type(raw)
            elif isinstance(action.default, bool):
                raw = raw.lower() in ("1", "true", "yes", "on")
            defaults[action.dest] = raw
    if defaults:
        sub.set_defaults(**defaults)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, argparse.ArgumentParser]]:
    parser = argparse.ArgumentParser(
        prog="artifact",
        description="Evaluate, compare, and correct human-artifact detections "
        "on generated-image corpora.",
    )
    subs = parser.add_subparsers(dest="command", required=True)
    registry: dict[str, argparse.ArgumentParser] = {}

    def sub(name: str, help_text: str) -> argparse.ArgumentParser:
        p = subs.add_parser(
            name, help=help_text, formatter_class=argparse.ArgumentDefaultsHelpFormatter
        )
        p.add_argument("--config", help="key=value config file applied as flag defaults")
        registry[name] = p
        return p

    p = sub("evaluate", "per-domain, per-class AP50 report")
    p.add_argument("--gt", required=True, help="ground-truth manifest (JSON)")
    p.add_argument("--dt", required=True, help="detections file (JSON)")
    p.add_argument("--mode", required=True, choices=["local", "global"], help="taxonomy mode")
    p.add_argument("--iou", type=float, default=0.5, help="IoU threshold for matching")
    p.add_argument("--out", help="write the report JSON here (figure rendered alongside)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p = sub("auc", "AUC method comparison on the reframed classification task")
    p.add_argument("--gt-local", required=True, help="local-mode ground-truth manifest")
    p.add_argument("--gt-global", required=True, help="global-mode ground-truth manifest")
    p.add_argument(
        "--scores",
        required=True,
        help="JSON map: method name -> {image_id: score}",
    )
    p.add_argument("--out", help="write the AUC JSON here (ROC CSVs and figure alongside)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p = sub("stats", "dataset class-count breakdown and prediction statistics")
    p.add_argument("--gt", required=True, help="ground-truth manifest (JSON)")
    p.add_argument("--dt", help="optional detections file for prediction stats")
    p.add_argument("--out", help="write the stats JSON here (figure rendered alongside)")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")

    p = sub("select-feedback", "emit a top-k% identifier-augmented feedback manifest")
    p.add_argument(
        "--dt",
        action="append",
        required=True,
        help="detections file; repeat to mix detector modes",
    )
    p.add_argument(
        "--mode",
        action="append",
        choices=["local", "global"],
        help="mode of each --dt (one value applies to all; default local)",
    )
    p.add_argument(
        "--prompts",
        required=True,
        help="JSON map: image_id -> prompt, or image_id -> "
        "{prompt, width?, height?, file_ref?}",
    )
    p.add_argument("--k", type=float, default=0.30, help="per-category confidence ratio")
    p.add_argument("--crop-pad", type=float, default=0.10, help="crop padding per side")
    p.add_argument("--out", required=True, help="feedback manifest path (JSON lines)")

    p = sub("correct", "iteratively inpaint detected artifacts via a backend")
    p.add_argument("--image", required=True, help="image reference to correct")
    p.add_argument(
        "--backend-url",
        default=os.environ.get(BACKEND_URL_ENV),
        help=f"backend base URL (falls back to ${BACKEND_URL_ENV})",
    )
    p.add_argument("--mode", choices=["local", "global"], default="local", help="detector mode")
    p.add_argument("--n-seeds", type=int, default=20, help="inpaint seeds per target")
    p.add_argument("--guidance", type=float, default=8.0, help="guidance scale")
    p.add_argument("--strength", type=float, default=0.99, help="inpainting strength")
    p.add_argument("--steps", type=int, default=30, help="inference steps")
    p.add_argument("--score-floor", type=float, default=0.5, help="correct boxes scoring >= this")
    p.add_argument("--max-rounds", type=int, default=3, help="round budget")
    p.add_argument(
        "--selection",
        choices=list(corrector_mod.SELECTION_POLICIES),
        default="half_score",
        help="candidate selection rule",
    )
    p.add_argument("--rescore-iou", type=float, default=0.3, help="IoU attributing re-detections")
    p.add_argument("--detect-threshold", type=float, default=0.05, help="detector score floor")
    p.add_argument("--prompt", default="", help="inpainting prompt")
    p.add_argument("--negative-prompt", default=None, help="inpainting negative prompt")
    p.add_argument("--audit-out", help="write the audit log JSON here")

    p = sub("mock-serve", "run the fixture-driven mock backend")
    p.add_argument("--fixture", required=True, help="scripted fixture (JSON)")
    p.add_argument("--port", type=int, default=8700, help="port to bind")

    return parser, registry


def _write_json(path: str, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _sibling(out: str, suffix: str) -> Path:
    p = Path(out)
    return p.with_name(p.stem + suffix)


def _cmd_evaluate(args) -> int:
    manifest = load_ground_truth(args.gt, args.mode)
    dets = load_detections(args.dt, args.mode, manifest)
    rep = evaluate_metrics(manifest, dets, iou_threshold=args.iou)
    sys.stdout.write(report_mod.render_report_table(rep))
    if args.out:
        _write_json(args.out, report_mod.report_to_json_dict(rep))
        if not args.no_figures:
            figures_mod.render_eval_figure(rep, _sibling(args.out, ".png"))
    return EXIT_OK


def _cmd_auc(args) -> int:
    local = load_ground_truth(args.gt_local, "local")
    global_ = load_ground_truth(args.gt_global, "global")
    with open(args.scores, encoding="utf-8") as f:
        method_scores = json.load(f)
    if not isinstance(method_scores, dict):
        raise ManifestError("scores file must map method -> {image_id: score}", path=args.scores)
    rows, curves = report_mod.auc_comparison([local, global_], method_scores)
    sys.stdout.write(report_mod.render_auc_table(rows))
    if args.out:
        _write_json(args.out, report_mod.auc_rows_to_json_dict(rows))
        for (method, domain), curve in sorted(curves.items()):
            if domain != report_mod.ALL_DOMAINS:
                continue
            safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in method)
            _sibling(args.out, f"_roc_{safe}.csv").write_text(
                report_mod.roc_to_csv(curve), encoding="utf-8"
            )
        if not args.no_figures:
            figures_mod.render_roc_figure(curves, rows, _sibling(args.out, ".png"))
    return EXIT_OK


def _cmd_stats(args) -> int:
    manifest = load_ground_truth(args.gt, _declared_mode(args.gt))
    table = report_mod.dataset_counts(manifest)
    pred = None
    if args.dt:
        dets = load_detections(args.dt, manifest.mode, manifest)
        pred = prediction_stats(dets, len(manifest.images))
    sys.stdout.write(report_mod.render_counts_table(table))
    if pred is not None:
        sys.stdout.write(
            f"\npredictions/image: {pred.preds_per_image:.2f}   "
            f"mean confidence: {pred.mean_confidence:.2f}   "
            f"({pred.detection_count} detections over {pred.image_count} images)\n"
        )
    if args.out:
        _write_json(args.out, report_mod.counts_to_json_dict(table, pred))
        if not args.no_figures:
            figures_mod.render_counts_figure(table, _sibling(args.out, ".png"))
    return EXIT_OK


def _declared_mode(path: str) -> str:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    mode = doc.get("mode") if isinstance(doc, dict) else None
    if mode not in ("local", "global"):
        raise ManifestError("manifest does not declare a valid mode", path=path)
    return mode


def _load_prompts(path: str) -> dict[str, dict]:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    if not isinstance(doc, dict):
        raise ManifestError("prompts file must map image_id -> prompt", path=path)
    table: dict[str, dict] = {}
    for image_id, entry in doc.items():
        if isinstance(entry, str):
            table[image_id] = {"prompt": entry}
        elif isinstance(entry, dict) and "prompt" in entry:
            table[image_id] = entry
        else:
            raise ManifestError(
                f"prompt entry for {image_id!r} must be a string or an object with 'prompt'",
                path=path,
            )
    return table


def _parse_feedback_detections(path: str, mode: Mode, prompts: dict[str, dict]) -> list[DetectionInstance]:
    """Detections for feedback selection are validated against the prompt
    table rather than a ground-truth manifest."""
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    entries = doc.get("detections") if isinstance(doc, dict) else doc
    if not isinstance(entries, list):
        raise ManifestError("detections must be a JSON array", path=path)
    out = []
    for i, det in enumerate(entries):
        ctx = f"detections[{i}]"
        image_id = str(det.get("image_id"))
        if image_id not in prompts:
            raise ManifestError(f"missing prompt for image {image_id!r}", context=ctx, path=path)
        try:
            out.append(
                DetectionInstance(
                    image_id=image_id,
                    cls=class_from_id(mode, int(det["category_id"])),
                    box=Box(*(float(v) for v in det["bbox"])),
                    score=float(det["score"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(str(exc), context=ctx, path=path)
    return out


def _cmd_select_feedback(args) -> int:
    prompts = _load_prompts(args.prompts)
    modes = args.mode or ["local"]
    if len(modes) == 1:
        modes = modes * len(args.dt)
    if len(modes) != len(args.dt):
        raise ManifestError("--mode must be given once or once per --dt")
    dets: list[DetectionInstance] = []
    for path, mode in zip(args.dt, modes):
        dets.extend(_parse_feedback_detections(path, Mode(mode), prompts))

    selected = feedback_mod.select_top_k_percent(
        dets, feedback_mod.SelectionParams(k=args.k)
    )
    by_image: dict[str, list[DetectionInstance]] = {iid: [] for iid in prompts}
    for d in selected:
        by_image[d.image_id].append(d)

    records = []
    for image_id in sorted(by_image):
        entry = prompts[image_id]
        size = None
        if "width" in entry and "height" in entry:
            size = (float(entry["width"]), float(entry["height"]))
        records.append(
            feedback_mod.augment_prompt(
                entry["prompt"],
                by_image[image_id],
                image_id=image_id,
                image_ref=entry.get("file_ref", image_id),
                image_size=size,
                crop_pad=args.crop_pad,
            )
        )
    feedback_mod.emit_feedback_manifest(records, args.out)
    augmented = sum(1 for r in records if r.identifiers)
    sys.stdout.write(
        f"wrote {len(records)} records ({augmented} with identifiers, "
        f"{len(selected)} selected boxes) to {args.out}\n"
    )
    return EXIT_OK


def _cmd_correct(args) -> int:
    if not args.backend_url:
        sys.stderr.write(f"error: --backend-url or ${BACKEND_URL_ENV} required\n")
        return EXIT_VALIDATION
    client = backend_mod.HttpBackendClient(args.backend_url)
    try:
        if not client.healthz():
            sys.stderr.write(f"error: backend at {args.backend_url} is unhealthy\n")
            return EXIT_BACKEND
    except backend_mod.BackendUnreachable as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BACKEND

    mode = Mode(args.mode)
    params = corrector_mod.InpaintParams(
        guidance_scale=args.guidance,
        strength=args.strength,
        steps=args.steps,
        n_seeds=args.n_seeds,
    )
    try:
        detections = client.detect(args.image, mode, args.detect_threshold)
        plan = corrector_mod.plan_correction(
            args.image, detections, score_floor=args.score_floor, max_rounds=args.max_rounds
        )
        final_ref, audit = corrector_mod.run_correction(
            args.image,
            client,
            params,
            plan,
            mode=mode,
            prompt=args.prompt,
            negative_prompt=args.negative_prompt,
            selection_policy=args.selection,
            rescore_iou=args.rescore_iou,
            detect_threshold=args.detect_threshold,
        )
    except corrector_mod.CorrectionError as exc:
        if args.audit_out:
            Path(args.audit_out).write_text(exc.audit.to_json(), encoding="utf-8")
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BACKEND
    except (backend_mod.BackendUnreachable, backend_mod.BackendError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_BACKEND

    if args.audit_out:
        Path(args.audit_out).write_text(audit.to_json(), encoding="utf-8")
    residual = len(audit.rounds[-1].residual_scores) if audit.rounds else 0
    sys.stdout.write(
        f"final image: {final_ref}\n"
        f"rounds: {len(audit.rounds)}   converged: {audit.converged}   "
        f"residual detections >= floor: {residual}\n"
    )
    return EXIT_OK if audit.converged else EXIT_RESIDUAL


def _cmd_mock_serve(args) -> int:
    fixture = backend_mod.ScriptedFixture.from_file(args.fixture)
    server = backend_mod.MockServer(fixture, port=args.port)
    sys.stdout.write(f"mock backend listening on {server.base_url}\n")
    sys.stdout.flush()
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    return EXIT_OK


_COMMANDS = {
    "evaluate": _cmd_evaluate,
    "auc": _cmd_auc,
    "stats": _cmd_stats,
    "select-feedback": _cmd_select_feedback,
    "correct": _cmd_correct,
    "mock-serve": _cmd_mock_serve,
}


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser, registry = build_parser()
    if "--config" in argv:
        config_path = argv[argv.index("--config") + 1]
        config = _read_config(config_path)
        for sub in registry.values():
            _apply_config(sub, config)
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except (ManifestError, ValueError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
