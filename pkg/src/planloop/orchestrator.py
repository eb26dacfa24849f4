"""Plan, then loop feedback -> refine for a fixed number of iterations.

Whether to refine is decided by the *emitted* feedback (oracle, random or
model-written); scoring always uses the oracle's verdict on the same plan.
"""

from __future__ import annotations

import logging
import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .codec import parse_plan, render_plan
from .domain import CONSTRAINTS, Feedback, Plan, ReferenceBundle, TripQuery, Verdict, parse_feedback, render_feedback
from .gateway.backends import Backend, BackendError
from .gateway.prompts import build_feedback_prompt, build_planner_prompt, build_refiner_prompt
from .oracle import REASONS, check_commonsense

log = logging.getLogger(__name__)

VARIANTS = ("oracle", "random", "llm")
_SLOTS = ("breakfast", "lunch", "dinner", "attraction", "accommodation", "transportation", "flight")


@dataclass(frozen=True)
class FeedbackVariant:
    kind: str
    seed: int = 0
    backend: Optional[Backend] = field(default=None, compare=False)
    shots: tuple = field(default=(), compare=False)  # for llm: two (query, ref, plan, feedback)
    fail_probability: float = 0.5

    def __post_init__(self):
        if self.kind not in VARIANTS:
            raise ValueError(f"unknown feedback variant {self.kind!r}")
        if self.kind == "llm" and self.backend is None:
            raise ValueError("llm feedback needs a backend")

    @classmethod
    def oracle(cls):
        return cls("oracle")

    @classmethod
    def random(cls, seed: int, fail_probability: float = 0.5):
        return cls("random", seed, fail_probability=fail_probability)

    @classmethod
    def llm(cls, backend: Backend, shots: Sequence):
        return cls("llm", backend=backend, shots=tuple(shots))

    def emit(self, plan: Plan, query: TripQuery, ref: ReferenceBundle, iteration: int, scoring_ref=None) -> Feedback:
        if self.kind == "oracle":
            return check_commonsense(plan, query, scoring_ref if scoring_ref is not None else ref)
        if self.kind == "random":
            return random_feedback(random.Random(f"{self.seed}:{query.id}:{iteration}"), query.day_count, self.fail_probability)
        prompt = build_feedback_prompt(query, ref, plan, self.shots)
        reply = self.backend.complete(prompt)
        return parse_feedback(reply, strict=False)


def random_feedback(rng: random.Random, day_count: int, fail_probability: float = 0.5) -> Feedback:
    """Well-formed feedback with independent coin-flip verdicts and phrasebook reasons."""
    verdicts = []
    for cid in CONSTRAINTS:
        if rng.random() < fail_probability:
            template = rng.choice(REASONS[cid])
            reason = template.format(
                day=rng.randint(1, day_count),
                slot=rng.choice(_SLOTS),
                n=rng.randint(1, 3),
                name="the chosen accommodation",
            )
            verdicts.append(Verdict.fail(reason))
        else:
            verdicts.append(Verdict.success())
    return Feedback(tuple(verdicts))


@dataclass(frozen=True)
class IterationTrace:
    """State after ``iteration`` refinement steps.

    ``feedback_emitted`` is the feedback on the previous iteration's plan
    that led here (``None`` at iteration 0); ``refined`` says whether the
    refiner was called for this step.
    """

    query_id: str
    iteration: int
    plan: Optional[Plan]
    oracle_truth: Optional[Feedback]
    feedback_emitted: Optional[Feedback] = None
    refined: bool = False
    raw_text: Optional[str] = None
    warnings: tuple = ()
    error: Optional[str] = None

    @property
    def delivered(self) -> bool:
        return self.plan is not None

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "iteration": self.iteration,
            "delivered": self.delivered,
            "plan_text": render_plan(self.plan) if self.plan is not None else None,
            "raw_text": self.raw_text,
            "feedback_emitted": render_feedback(self.feedback_emitted) if self.feedback_emitted else None,
            "oracle_truth": render_feedback(self.oracle_truth) if self.oracle_truth else None,
            "refined": self.refined,
            "warnings": list(self.warnings),
            "error": self.error,
        }

    @classmethod
    def from_json(cls, obj: dict, day_count: int) -> "IterationTrace":
        plan = None
        if obj.get("plan_text") is not None:
            plan, diag = parse_plan(obj["plan_text"], day_count)
            if plan is None:
                raise ValueError(f"stored plan for {obj['query_id']} does not parse: {diag.fatal}")
        fb = obj.get("feedback_emitted")
        truth = obj.get("oracle_truth")
        return cls(
            query_id=obj["query_id"],
            iteration=obj["iteration"],
            plan=plan,
            oracle_truth=parse_feedback(truth) if truth else None,
            feedback_emitted=parse_feedback(fb) if fb else None,
            refined=obj.get("refined", False),
            raw_text=obj.get("raw_text"),
            warnings=tuple(obj.get("warnings") or ()),
            error=obj.get("error"),
        )


def _truth(plan, query, ref):
    return check_commonsense(plan, query, ref) if plan is not None else None


def run_direct(
    query: TripQuery,
    ref: ReferenceBundle,
    planner: Backend,
    shots: Sequence = (),
    scoring_ref: Optional[ReferenceBundle] = None,
) -> IterationTrace:
    """One planner call. A reply that does not parse is a delivery failure, recorded in the trace."""
    scoring_ref = scoring_ref if scoring_ref is not None else ref
    prompt = build_planner_prompt(query, ref, shots)
    try:
        reply = planner.complete(prompt)
    except BackendError as exc:
        return IterationTrace(query.id, 0, None, None, error=f"{type(exc).__name__}: {exc}")
    plan, diag = parse_plan(reply, query.day_count)
    warnings = tuple(f"day {d} {s}: {m}" for d, s, m in diag.warnings)
    if plan is None:
        warnings += (f"delivery failure at line {diag.fatal[0]}: {diag.fatal[1]}",)
    return IterationTrace(query.id, 0, plan, _truth(plan, query, scoring_ref), raw_text=reply, warnings=warnings)


def run_refinement(
    query: TripQuery,
    ref: ReferenceBundle,
    initial: IterationTrace,
    variant: FeedbackVariant,
    refiner: Optional[Backend],
    max_iters: int,
    scoring_ref: Optional[ReferenceBundle] = None,
) -> list:
    """Return ``1 + max_iters`` traces, the first being ``initial``.

    Iterations after a backend error are copies of the last good state with
    ``error`` set, so every query yields the same number of traces.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    scoring_ref = scoring_ref if scoring_ref is not None else ref
    traces = [initial]
    error = None
    for it in range(1, max_iters + 1):
        prev = traces[-1]
        if error is not None or prev.plan is None:
            traces.append(replace(prev, iteration=it, feedback_emitted=None, refined=False, warnings=(), error=error))
            continue
        try:
            emitted = variant.emit(prev.plan, query, ref, it, scoring_ref=scoring_ref)
            if emitted.all_success:
                traces.append(replace(prev, iteration=it, feedback_emitted=emitted, refined=False, warnings=()))
                continue
            prompt = build_refiner_prompt(query, ref, prev.plan, emitted)
            reply = refiner.complete(prompt)
        except BackendError as exc:
            error = f"{type(exc).__name__}: {exc}"
            log.warning("query %s: refinement aborted at iteration %d: %s", query.id, it, exc)
            traces.append(replace(prev, iteration=it, feedback_emitted=None, refined=False, warnings=(), error=error))
            continue
        plan, diag = parse_plan(reply, query.day_count)
        if plan is None:
            log.warning("query %s iteration %d: refiner output unparseable, keeping previous plan", query.id, it)
            traces.append(
                replace(
                    prev,
                    iteration=it,
                    feedback_emitted=emitted,
                    refined=True,
                    raw_text=reply,
                    warnings=(f"refiner output unparseable: {diag.fatal[1]}",),
                )
            )
            continue
        traces.append(
            IterationTrace(
                query.id,
                it,
                plan,
                check_commonsense(plan, query, scoring_ref),
                feedback_emitted=emitted,
                refined=True,
                raw_text=reply,
                warnings=tuple(f"day {d} {s}: {m}" for d, s, m in diag.warnings),
            )
        )
    return traces
