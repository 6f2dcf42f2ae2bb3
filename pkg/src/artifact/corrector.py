"""Iterative inpainting correction driven by detector confidence.

For every artifact box above a score floor, a batch of seeded inpaints is
requested from a backend, each candidate is re-detected, and the winner is
the candidate whose re-detected score lands closest to half the original
score (a plain minimum invites degenerate inpaints that erase the body part
entirely and score near zero). The adopted image feeds the next target, and
rounds repeat until the image is clean or the round budget runs out.
Everything is logged in an audit trail whose serialized form is
byte-reproducible for a fixed backend and parameter set.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .corpus import Box, DetectionInstance
from .metrics import detection_sort_key, iou
from .taxonomy import Mode

DEFAULT_SCORE_FLOOR = 0.5
DEFAULT_MAX_ROUNDS = 3
DEFAULT_RESCORE_IOU = 0.3


@dataclass(frozen=True)
class InpaintParams:
    """Inpainting inference settings (defaults follow the reference
    correction setup: guidance 8.0, strength 0.99, 30 steps, 20 seeds)."""

    guidance_scale: float = 8.0
    strength: float = 0.99
    steps: int = 30
    n_seeds: int = 20

    def __post_init__(self) -> None:
        if not 0.0 < self.strength <= 1.0:
            raise ValueError(f"strength must be in (0, 1], got {self.strength}")
        if self.steps < 1 or self.n_seeds < 1:
            raise ValueError("steps and n_seeds must be positive")

    def as_dict(self) -> dict:
        return {
            "guidance_scale": self.guidance_scale,
            "strength": self.strength,
            "steps": self.steps,
            "n_seeds": self.n_seeds,
        }


class CorrectorBackend(Protocol):
    """What the corrector needs from a detector/inpainter service."""

    def detect(
        self, image_ref: str, mode: Mode, score_threshold: float = 0.05
    ) -> list[DetectionInstance]: ...

    def inpaint(
        self,
        image_ref: str,
        box: Box,
        prompt: str,
        negative_prompt: str | None,
        seed: int,
        params: InpaintParams,
    ) -> str: ...


@dataclass(frozen=True)
class CorrectionPlan:
    """Which boxes get corrected, in descending confidence order."""

    image_ref: str
    targets: tuple[DetectionInstance, ...]
    score_floor: float = DEFAULT_SCORE_FLOOR
    max_rounds: int = DEFAULT_MAX_ROUNDS

    def __post_init__(self) -> None:
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be positive")
        scores = [t.score for t in self.targets]
        if any(s < self.score_floor for s in scores):
            raise ValueError("plan contains targets below the score floor")
        if scores != sorted(scores, reverse=True):
            raise ValueError("plan targets must be in descending score order")


def plan_correction(
    image_ref: str,
    detections: Sequence[DetectionInstance],
    score_floor: float = DEFAULT_SCORE_FLOOR,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> CorrectionPlan:
    """Plan one correction pass: detections at or above the floor, strongest
    first. An empty plan makes the correction a no-op."""
    targets = sorted(
        (d for d in detections if d.score >= score_floor), key=detection_sort_key
    )
    return CorrectionPlan(
        image_ref=image_ref,
        targets=tuple(targets),
        score_floor=score_floor,
        max_rounds=max_rounds,
    )


@dataclass(frozen=True)
class CandidateResult:
    """One seeded inpaint outcome: the re-detected score inside the
    repainted region (0.0 when nothing intersects it)."""

    seed: int
    image_ref: str
    rescore: float


SELECTION_POLICIES = ("half_score", "min")


def select_inpaint_result(
    s0: float, candidates: Sequence[CandidateResult], policy: str = "half_score"
) -> int:
    """Pick the winning candidate index.

    ``half_score`` (default) minimizes |rescore - s0/2|: aiming at half the
    original score filters out both still-broken regions and degenerate
    repaints that delete the part outright. ``min`` takes the lowest rescore
    for comparison runs. Ties break toward the lower rescore, then the lower
    seed.
    """
    if not candidates:
        raise ValueError("no candidates to select from")
    if not 0.0 <= s0 <= 1.0:
        raise ValueError(f"original score must be in [0, 1], got {s0}")
    if policy == "half_score":
        target = s0 / 2.0
        key = lambda c: (abs(c.rescore - target), c.rescore, c.seed)
    elif policy == "min":
        key = lambda c: (c.rescore, c.seed)
    else:
        raise ValueError(f"unknown selection policy {policy!r} (use one of {SELECTION_POLICIES})")
    best = min(range(len(candidates)), key=lambda i: key(candidates[i]))
    return best


@dataclass(frozen=True)
class TargetDecision:
    """Audit entry for one corrected box."""

    box: Box
    category_id: int
    original_score: float
    candidates: tuple[CandidateResult, ...]
    chosen_seed: int
    chosen_rescore: float
    selection_distance: float

    def as_dict(self) -> dict:
        return {
            "box": self.box.as_list(),
            "category_id": self.category_id,
            "original_score": self.original_score,
            "candidates": [
                {"seed": c.seed, "image_ref": c.image_ref, "rescore": c.rescore}
                for c in self.candidates
            ],
            "chosen_seed": self.chosen_seed,
            "chosen_rescore": self.chosen_rescore,
            "selection_distance": self.selection_distance,
        }


@dataclass(frozen=True)
class RoundLog:
    round_index: int
    decisions: tuple[TargetDecision, ...]
    residual_scores: tuple[float, ...]

    def as_dict(self) -> dict:
        return {
            "round_index": self.round_index,
            "decisions": [d.as_dict() for d in self.decisions],
            "residual_scores": list(self.residual_scores),
        }


@dataclass
class AuditLog:
    """Complete trace of a correction run; serializes deterministically."""

    image_ref: str
    params: InpaintParams
    score_floor: float
    max_rounds: int
    selection_policy: str
    rescore_iou: float
    rounds: list[RoundLog] = field(default_factory=list)
    final_image_ref: str = ""
    converged: bool = False

    def as_dict(self) -> dict:
        return {
            "image_ref": self.image_ref,
            "params": self.params.as_dict(),
            "score_floor": self.score_floor,
            "max_rounds": self.max_rounds,
            "selection_policy": self.selection_policy,
            "rescore_iou": self.rescore_iou,
            "rounds": [r.as_dict() for r in self.rounds],
            "final_image_ref": self.final_image_ref,
            "converged": self.converged,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True, indent=2) + "\n"


class CorrectionError(RuntimeError):
    """Backend failure mid-run; carries the partial audit trail."""

    def __init__(self, message: str, audit: AuditLog):
        super().__init__(message)
        self.audit = audit


def _rescore(
    detections: Sequence[DetectionInstance], box: Box, attribution_iou: float
) -> float:
    scores = [d.score for d in detections if iou(d.box, box) >= attribution_iou]
    return max(scores, default=0.0)


def run_correction(
    image_ref: str,
    backend: CorrectorBackend,
    params: InpaintParams,
    plan: CorrectionPlan,
    *,
    mode: Mode = Mode.LOCAL,
    prompt: str = "",
    negative_prompt: str | None = None,
    selection_policy: str = "half_score",
    rescore_iou: float = DEFAULT_RESCORE_IOU,
    detect_threshold: float = 0.05,
    max_in_flight: int = 8,
) -> tuple[str, AuditLog]:
    """Run the iterative correction loop and return the final image ref with
    its audit log.

    Per target: ``params.n_seeds`` inpaints fan out concurrently (bounded by
    ``max_in_flight``), each candidate is re-detected, results are gathered
    and ordered by seed before selection, so response arrival order never
    affects the outcome. The chosen candidate becomes the working image.
    After each round the working image is re-detected; a new round starts
    only while something still scores at or above the plan's floor and the
    round budget allows. Backend failures abort with the partial audit
    attached to the raised :class:`CorrectionError`.
    """
    audit = AuditLog(
        image_ref=image_ref,
        params=params,
        score_floor=plan.score_floor,
        max_rounds=plan.max_rounds,
        selection_policy=selection_policy,
        rescore_iou=rescore_iou,
    )
    working = image_ref
    if not plan.targets:
        audit.final_image_ref = working
        audit.converged = True
        return working, audit

    def run_candidate(parent: str, target_box: Box, seed: int) -> CandidateResult:
        child = backend.inpaint(parent, target_box, prompt, negative_prompt, seed, params)
        redetected = backend.detect(child, mode, detect_threshold)
        return CandidateResult(
            seed=seed, image_ref=child, rescore=_rescore(redetected, target_box, rescore_iou)
        )

    targets: Sequence[DetectionInstance] = plan.targets
    for round_index in range(1, plan.max_rounds + 1):
        decisions: list[TargetDecision] = []
        try:
            for target in targets:
                with ThreadPoolExecutor(max_workers=min(max_in_flight, params.n_seeds)) as pool:
                    futures = [
                        pool.submit(run_candidate, working, target.box, seed)
                        for seed in range(params.n_seeds)
                    ]
                    candidates = sorted((f.result() for f in futures), key=lambda c: c.seed)
                chosen = select_inpaint_result(target.score, candidates, selection_policy)
                winner = candidates[chosen]
                decisions.append(
                    TargetDecision(
                        box=target.box,
                        category_id=target.cls.id,
                        original_score=target.score,
                        candidates=tuple(candidates),
                        chosen_seed=winner.seed,
                        chosen_rescore=winner.rescore,
                        selection_distance=abs(winner.rescore - target.score / 2.0),
                    )
                )
                working = winner.image_ref
            remaining = backend.detect(working, mode, detect_threshold)
        except CorrectionError:
            raise
        except Exception as exc:
            audit.rounds.append(
                RoundLog(round_index=round_index, decisions=tuple(decisions), residual_scores=())
            )
            audit.final_image_ref = working
            raise CorrectionError(f"backend failure in round {round_index}: {exc}", audit)

        residual = sorted(
            (d for d in remaining if d.score >= plan.score_floor), key=detection_sort_key
        )
        audit.rounds.append(
            RoundLog(
                round_index=round_index,
                decisions=tuple(decisions),
                residual_scores=tuple(d.score for d in residual),
            )
        )
        if not residual:
            audit.converged = True
            break
        targets = residual

    audit.final_image_ref = working
    return working, audit
