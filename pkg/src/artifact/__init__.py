"""Toolkit for evaluating and correcting human-artifact detections on
generated-image corpora."""

from .backend import (
    BackendError,
    BackendUnreachable,
    DetectRequest,
    DetectResponse,
    HttpBackendClient,
    InpaintRequest,
    InpaintResponse,
    MockBackend,
    MockServer,
    ProtocolError,
    ScriptedFixture,
    serve,
)
from .corpus import (
    Box,
    DetectionInstance,
    GroundTruthInstance,
    ImageRecord,
    Manifest,
    ManifestError,
    PoseFilterParams,
    PoseKeypoint,
    filter_by_pose,
    load_detections,
    load_ground_truth,
    load_keypoints,
    serialize_detections,
    serialize_ground_truth,
)
from .corrector import (
    AuditLog,
    CandidateResult,
    CorrectionError,
    CorrectionPlan,
    InpaintParams,
    plan_correction,
    run_correction,
    select_inpaint_result,
)
from .feedback import (
    FeedbackRecord,
    SelectionParams,
    augment_prompt,
    emit_feedback_manifest,
    load_feedback_manifest,
    select_top_k_percent,
)
from .metrics import (
    ClassAp,
    EvalReport,
    MatchResult,
    PredictionStats,
    PrCurve,
    RocCurve,
    ScoreAggregate,
    average_precision_50,
    binary_labels_from_gt,
    evaluate,
    image_score,
    image_scores,
    iou,
    match_detections,
    prediction_stats,
    roc_auc,
    topq_aggregate,
    topq_by_image,
)
from .taxonomy import (
    ArtifactClass,
    ArtifactKind,
    BodyPart,
    Mode,
    class_from_id,
    class_from_name,
    classes_for_mode,
)

__version__ = "0.1.0"
