import random
import time

import pytest

from artifact import (
    CandidateResult,
    CorrectionError,
    InpaintParams,
    MockBackend,
    Mode,
    ScriptedFixture,
    plan_correction,
    run_correction,
    select_inpaint_result,
)
from artifact.corrector import CorrectionPlan

from helpers import det


def make_fixture(seed_factors, images=None):
    images = images if images is not None else {
        "img": {"local": [{"bbox": [10, 10, 20, 20], "category_id": 4, "score": 0.8}]}
    }
    return ScriptedFixture.from_dict(
        {"model_tag": "mock", "seed_factors": seed_factors, "images": images}
    )


def test_inpaint_params_defaults():
    params = InpaintParams()
    assert params.guidance_scale == 8.0
    assert params.strength == 0.99
    assert params.steps == 30
    assert params.n_seeds == 20


def test_plan_filters_and_orders():
    dets = [
        det("img", 4, [0, 0, 10, 10], 0.6),
        det("img", 4, [20, 0, 10, 10], 0.8),
        det("img", 4, [40, 0, 10, 10], 0.3),
    ]
    plan = plan_correction("img", dets, score_floor=0.5)
    assert [t.score for t in plan.targets] == [0.8, 0.6]


def test_plan_empty_without_detections():
    plan = plan_correction("img", [], score_floor=0.5)
    assert plan.targets == ()


def test_plan_empty_when_all_below_floor():
    dets = [det("img", 4, [0, 0, 10, 10], 0.45)]
    assert plan_correction("img", dets, score_floor=0.5).targets == ()


def cand(seed, rescore):
    return CandidateResult(seed=seed, image_ref=f"c{seed}", rescore=rescore)


def test_select_closest_to_half():
    candidates = [cand(0, 0.05), cand(1, 0.42), cand(2, 0.77)]
    assert select_inpaint_result(0.8, candidates) == 1


def test_select_single_candidate():
    assert select_inpaint_result(0.9, [cand(0, 0.9)]) == 0


def test_select_tie_prefers_lower_rescore():
    # Both rescores sit 0.1 from the 0.3 target; the lower one wins.
    candidates = [cand(0, 0.4), cand(1, 0.2)]
    assert select_inpaint_result(0.6, candidates) == 1


def test_select_tie_then_lower_seed():
    candidates = [cand(3, 0.3), cand(1, 0.3)]
    assert select_inpaint_result(0.6, candidates) == 1


def test_select_min_policy():
    candidates = [cand(0, 0.05), cand(1, 0.42)]
    assert select_inpaint_result(0.8, candidates, policy="min") == 0


def test_select_empty_rejected():
    with pytest.raises(ValueError, match="no candidates"):
        select_inpaint_result(0.8, [])


def test_select_unknown_policy():
    with pytest.raises(ValueError, match="unknown selection policy"):
        select_inpaint_result(0.8, [cand(0, 0.1)], policy="median")


def test_select_optimal_over_random_instances():
    rng = random.Random(123)
    for _ in range(1000):
        s0 = rng.random()
        candidates = [
            cand(seed, round(rng.random(), rng.choice([1, 2, 6])))
            for seed in range(rng.randint(1, 8))
        ]
        chosen = candidates[select_inpaint_result(s0, candidates)]
        best = min(abs(c.rescore - s0 / 2) for c in candidates)
        assert abs(chosen.rescore - s0 / 2) == pytest.approx(best, abs=0)
        # documented tie-break: lower rescore, then lower seed
        tied = [c for c in candidates if abs(c.rescore - s0 / 2) == abs(chosen.rescore - s0 / 2)]
        assert chosen == min(tied, key=lambda c: (c.rescore, c.seed))


def _run(backend, n_seeds=4, floor=0.5, rounds=3, **kwargs):
    params = InpaintParams(n_seeds=n_seeds)
    dets = backend.detect("img", Mode.LOCAL, 0.05)
    plan = plan_correction("img", dets, score_floor=floor, max_rounds=rounds)
    return run_correction("img", backend, params, plan, **kwargs)


def test_halving_fixture_converges_one_round():
    backend = MockBackend(make_fixture([0.5] * 4))
    final, audit = _run(backend)
    assert audit.converged
    assert len(audit.rounds) == 1
    decision = audit.rounds[0].decisions[0]
    assert decision.original_score == 0.8
    assert decision.chosen_rescore == pytest.approx(0.4)
    assert audit.rounds[0].residual_scores == ()
    assert final == decision.candidates[decision.chosen_seed].image_ref


def test_empty_plan_is_noop():
    backend = MockBackend(make_fixture([0.5], images={"img": {"local": []}}))
    params = InpaintParams(n_seeds=2)
    plan = plan_correction("img", [], score_floor=0.5)
    final, audit = run_correction("img", backend, params, plan)
    assert final == "img"
    assert audit.rounds == []
    assert audit.converged


def test_never_improving_fixture_exhausts_rounds():
    backend = MockBackend(make_fixture([1.0] * 3))
    final, audit = _run(backend, n_seeds=3)
    assert not audit.converged
    assert len(audit.rounds) == 3
    assert audit.rounds[-1].residual_scores == (0.8,)


def test_half_score_avoids_degenerate_minimum():
    # Seed 2 erases the detection entirely (rescore 0.04); the half-score
    # rule still picks the candidate nearest 0.4.
    backend = MockBackend(make_fixture([0.9, 0.5, 0.05, 0.62]))
    final, audit = _run(backend)
    decision = audit.rounds[0].decisions[0]
    assert decision.chosen_seed == 1
    assert decision.chosen_rescore == pytest.approx(0.4)


def test_multi_target_round():
    images = {
        "img": {
            "local": [
                {"bbox": [10, 10, 20, 20], "category_id": 4, "score": 0.9},
                {"bbox": [60, 60, 20, 20], "category_id": 1, "score": 0.7},
            ]
        }
    }
    backend = MockBackend(make_fixture([0.5, 0.55], images=images))
    final, audit = _run(backend, n_seeds=2)
    assert audit.converged
    (round_log,) = audit.rounds
    assert len(round_log.decisions) == 2
    assert [d.original_score for d in round_log.decisions] == [0.9, 0.7]
    # the adopted ref accumulates one inpaint op per corrected target
    assert final.count("|") == 2


class JitterBackend:
    """Delegates to a backend, completing inpaints in reverse seed order."""

    def __init__(self, inner, scale=0.003):
        self.inner = inner
        self.scale = scale

    def detect(self, image_ref, mode, score_threshold=0.05):
        return self.inner.detect(image_ref, mode, score_threshold)

    def inpaint(self, image_ref, box, prompt, negative_prompt, seed, params):
        time.sleep((params.n_seeds - seed) * self.scale)
        return self.inner.inpaint(image_ref, box, prompt, negative_prompt, seed, params)


def test_audit_byte_identical_across_runs_and_schedules():
    fixture = make_fixture([0.9, 0.5, 0.05, 0.62])
    baseline = None
    for _ in range(5):
        _, audit = _run(MockBackend(fixture))
        blob = audit.to_json()
        baseline = blob if baseline is None else baseline
        assert blob == baseline
    _, jittered = _run(JitterBackend(MockBackend(fixture)))
    assert jittered.to_json() == baseline


class CountingBackend:
    def __init__(self, inner):
        self.inner = inner
        self.detect_calls = 0
        self.inpaint_calls = 0

    def detect(self, image_ref, mode, score_threshold=0.05):
        self.detect_calls += 1
        return self.inner.detect(image_ref, mode, score_threshold)

    def inpaint(self, image_ref, box, prompt, negative_prompt, seed, params):
        self.inpaint_calls += 1
        return self.inner.inpaint(image_ref, box, prompt, negative_prompt, seed, params)


def test_budget_and_bookkeeping():
    n_seeds = 3
    backend = CountingBackend(MockBackend(make_fixture([1.0] * n_seeds)))
    dets = backend.inner.detect("img", Mode.LOCAL, 0.05)
    plan = plan_correction("img", dets, score_floor=0.5, max_rounds=3)
    _, audit = run_correction("img", backend, InpaintParams(n_seeds=n_seeds), plan)
    assert len(audit.rounds) <= 3
    # every issued inpaint appears exactly once in the audit
    logged = sum(len(d.candidates) for r in audit.rounds for d in r.decisions)
    assert logged == backend.inpaint_calls
    # each candidate re-detect plus one end-of-round sweep
    assert backend.detect_calls == backend.inpaint_calls + len(audit.rounds)


class FlakyBackend:
    def __init__(self, inner, fail_after):
        self.inner = inner
        self.fail_after = fail_after
        self.calls = 0

    def detect(self, image_ref, mode, score_threshold=0.05):
        return self.inner.detect(image_ref, mode, score_threshold)

    def inpaint(self, image_ref, box, prompt, negative_prompt, seed, params):
        self.calls += 1
        if self.calls > self.fail_after:
            raise ConnectionError("backend went away")
        return self.inner.inpaint(image_ref, box, prompt, negative_prompt, seed, params)


def test_backend_failure_aborts_with_partial_audit():
    backend = FlakyBackend(MockBackend(make_fixture([1.0] * 4)), fail_after=2)
    with pytest.raises(CorrectionError) as excinfo:
        _run(backend)
    audit = excinfo.value.audit
    assert audit.rounds  # partial trail survives
    assert not audit.converged


def test_plan_validation():
    with pytest.raises(ValueError, match="descending"):
        CorrectionPlan(
            image_ref="img",
            targets=(det("img", 4, [0, 0, 5, 5], 0.6), det("img", 4, [9, 0, 5, 5], 0.8)),
        )
    with pytest.raises(ValueError, match="below the score floor"):
        CorrectionPlan(
            image_ref="img",
            targets=(det("img", 4, [0, 0, 5, 5], 0.4),),
            score_floor=0.5,
        )
