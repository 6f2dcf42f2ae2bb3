import math

from artifact import evaluate, roc_auc
from artifact.figures import render_counts_figure, render_eval_figure
from artifact.report import (
    dataset_counts,
    render_counts_table,
    render_report_table,
    report_to_json_dict,
    roc_to_csv,
)

from helpers import det, load_manifest_from_doc, manifest_doc


def _report(tmp_path):
    doc = manifest_doc(
        "local",
        images=[("im1", "sdxl", 100, 100), ("im2", "dalle3", 100, 100)],
        annotations=[("im1", 4, [10, 10, 20, 20])],
    )
    manifest = load_manifest_from_doc(tmp_path, doc)
    dets = [det("im1", 4, [10, 10, 20, 20], 0.9)]
    return manifest, evaluate(manifest, dets)


def test_table_cells_and_undefined_rendering(tmp_path):
    _, report = _report(tmp_path)
    table = render_report_table(report)
    lines = table.splitlines()
    assert lines[0].split()[0] == "Domain"
    assert "Average" in lines[0]
    sdxl = next(line for line in lines if line.startswith("sdxl"))
    assert "100.0 / 1" in sdxl
    assert "- / 0" in sdxl  # classes with no ground truth
    assert any(line.startswith("ALL") for line in lines)


def test_report_json_shape(tmp_path):
    _, report = _report(tmp_path)
    doc = report_to_json_dict(report)
    assert doc["mode"] == "local"
    assert doc["iou_threshold"] == 0.5
    assert doc["domains"][-1] == "ALL"
    cell = doc["rows"]["sdxl"]["cells"]["weird_hand"]
    assert cell == {"ap50": 1.0, "gt_count": 1}
    assert doc["rows"]["dalle3"]["average"] is None
    assert "multi_label_boxes" in doc["metadata"]


def test_roc_csv_format():
    curve = roc_auc(
        {"p": 0.9, "q": 0.4, "n": 0.2}, {"p": True, "q": True, "n": False}
    )
    csv_text = roc_to_csv(curve)
    lines = csv_text.splitlines()
    assert lines[0] == "threshold,fpr,tpr"
    assert lines[1].startswith("inf,")
    assert len(lines) == len(curve.thresholds) + 1
    # values parse back losslessly
    t, f, r = lines[2].split(",")
    assert float(f) == curve.fpr[1] and float(r) == curve.tpr[1]
    assert math.isinf(float(lines[1].split(",")[0]))


def test_counts_table_rendering(tmp_path):
    manifest, _ = _report(tmp_path)
    table = dataset_counts(manifest)
    text = render_counts_table(table)
    header = text.splitlines()[0]
    assert header.split()[:2] == ["Domain", "Images"]
    sdxl = next(line for line in text.splitlines() if line.startswith("sdxl"))
    assert sdxl.split()[1] == "1"  # one sdxl image


def test_figures_write_png(tmp_path):
    manifest, report = _report(tmp_path)
    out = render_eval_figure(report, tmp_path / "eval.png")
    assert out.stat().st_size > 0
    out = render_counts_figure(dataset_counts(manifest), tmp_path / "counts.png")
    assert out.stat().st_size > 0
