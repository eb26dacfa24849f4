from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Optional, Sequence

from ..codec import render_plan
from ..domain import Feedback, Plan, render_feedback
from ..ingest import render_reference

ROLES = ("planner", "feedback", "refiner", "scrubber")
MAX_PLANNER_SHOTS = 5
FEEDBACK_SHOTS = 2


class RefineNotNeeded(ValueError):
    pass


@dataclass(frozen=True)
class PromptBundle:
    role: str
    text: str
    shot_count: int = 0
    shot_ids: tuple = ()
    stream: Optional[str] = field(default=None, compare=False)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.role == "planner" and not 0 <= self.shot_count <= MAX_PLANNER_SHOTS:
            raise ValueError(f"planner prompts take 0..{MAX_PLANNER_SHOTS} shots")
        if self.role == "feedback" and self.shot_count != FEEDBACK_SHOTS:
            raise ValueError(f"feedback prompts take exactly {FEEDBACK_SHOTS} shots")


@lru_cache(maxsize=None)
def load_template(name: str) -> str:
    return resources.files("planloop").joinpath("templates", f"{name}.txt").read_text(encoding="utf-8")


def fill(template: str, values: Sequence) -> str:
    """Replace placeholder occurrences left to right.

    ``values`` is a sequence of ``(placeholder, text)``; each pair consumes the
    next occurrence of its placeholder. Inserted text is never rescanned.
    """
    out, pos = [], 0
    for placeholder, text in values:
        i = template.find(placeholder, pos)
        if i < 0:
            raise ValueError(f"template has no further {placeholder!r}")
        out.append(template[pos:i])
        out.append(text)
        pos = i + len(placeholder)
    out.append(template[pos:])
    return "".join(out)


def _ref_text(ref) -> str:
    return ref if isinstance(ref, str) else render_reference(ref)


def _plan_text(plan) -> str:
    return plan if isinstance(plan, str) else render_plan(plan)


def _query_text(query) -> str:
    return query if isinstance(query, str) else query.text


def _shot_id(query) -> str:
    return query if isinstance(query, str) else query.id


def draw_shots(records: Sequence, k: int, seed: int, exclude: Optional[str] = None) -> list:
    """Pick ``k`` training records reproducibly; ``exclude`` skips a query id."""
    pool = [r for r in records if r.query.id != exclude]
    if k > len(pool):
        raise ValueError(f"asked for {k} shots from {len(pool)} records")
    return random.Random(seed).sample(pool, k)


def build_planner_prompt(query, ref, shots: Sequence = (), stream: Optional[str] = None) -> PromptBundle:
    """Instruction, worked examples ``(query, ref, plan)``, then the target sandbox and query."""
    shots = list(shots)
    if len(shots) > MAX_PLANNER_SHOTS:
        raise ValueError(f"at most {MAX_PLANNER_SHOTS} shots")
    parts = [load_template("planner")]
    for i, (q, r, p) in enumerate(shots, 1):
        parts.append(
            f"***** Example {i} *****\n"
            f"reference information box:\n{_ref_text(r)}\n"
            f"Query: {_query_text(q)}\n"
            f"Travel Plan:\n{_plan_text(p)}\n"
            f"***** Example {i} Ends *****"
        )
    parts.append(f"reference information box:\n{_ref_text(ref)}\nQuery: {_query_text(query)}\nTravel Plan:")
    return PromptBundle(
        "planner",
        "\n\n".join(parts),
        len(shots),
        tuple(_shot_id(q) for q, _, _ in shots),
        stream if stream is not None else _maybe_id(query),
    )


def _maybe_id(query):
    return None if isinstance(query, str) else query.id


def _feedback_text(fb) -> str:
    return fb if isinstance(fb, str) else render_feedback(fb)


def build_feedback_prompt(query, ref, plan, shots: Sequence, stream: Optional[str] = None) -> PromptBundle:
    """Feedback-generator prompt; ``shots`` are two ``(query, ref, plan, feedback)`` examples."""
    shots = list(shots)
    if len(shots) != FEEDBACK_SHOTS:
        raise ValueError(f"feedback prompts take exactly {FEEDBACK_SHOTS} shots")
    values = []
    for q, r, p, fb in shots:
        values += [
            ("{ref}", _ref_text(r)),
            ("{query}", _query_text(q)),
            ("{plan}", _plan_text(p)),
            ("{feedback}", _feedback_text(fb)),
        ]
    values += [("{ref}", _ref_text(ref)), ("{query}", _query_text(query)), ("{plan}", _plan_text(plan))]
    text = fill(load_template("feedback"), values)
    return PromptBundle(
        "feedback",
        text,
        FEEDBACK_SHOTS,
        tuple(_shot_id(s[0]) for s in shots),
        stream if stream is not None else _maybe_id(query),
    )


def build_refiner_prompt(query, ref, plan, feedback: Feedback, stream: Optional[str] = None) -> PromptBundle:
    if feedback.all_success:
        raise RefineNotNeeded("feedback is all-success")
    text = fill(
        load_template("refiner"),
        [
            ("{reference information box}", _ref_text(ref)),
            ("{query}", _query_text(query)),
            ("{original draft travel plan}", _plan_text(plan)),
            ("{feedback}", render_feedback(feedback)),
        ],
    )
    return PromptBundle("refiner", text, 0, (), stream if stream is not None else _maybe_id(query))


_PLACEHOLDER = re.compile(r"\{(ref|query|plan|feedback)\}")


def template_placeholders(name: str) -> list:
    return _PLACEHOLDER.findall(load_template(name))
