"""Text-completion backends and prompt assembly for the planner, feedback, refiner and scrubber roles."""

from .backends import (
    Backend,
    BackendError,
    HttpBackend,
    RecordingBackend,
    ReplayBackend,
    ScriptedBackend,
    ScriptExhausted,
    TranscriptMiss,
    complete,
    complete_many,
    prompt_sha256,
)
from .prompts import (
    PromptBundle,
    RefineNotNeeded,
    build_feedback_prompt,
    build_planner_prompt,
    build_refiner_prompt,
    draw_shots,
    load_template,
)

__all__ = [
    "Backend",
    "BackendError",
    "HttpBackend",
    "PromptBundle",
    "RecordingBackend",
    "RefineNotNeeded",
    "ReplayBackend",
    "ScriptExhausted",
    "ScriptedBackend",
    "TranscriptMiss",
    "build_feedback_prompt",
    "build_planner_prompt",
    "build_refiner_prompt",
    "complete",
    "complete_many",
    "draw_shots",
    "load_template",
    "prompt_sha256",
]
