"""Training corpora for plain SFT and feedback-aware fine-tuning (FAFT).

A FAFT sample places the oracle's feedback on a plan between the query and
the plan. Sampled plans give mostly negative feedback, annotated plans give
all-success feedback; at inference the feedback slot is pinned to
all-success.
"""

from __future__ import annotations

import json
import logging
import os
import random
import tempfile
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .codec import parse_plan, render_plan
from .domain import Feedback, parse_feedback, render_feedback
from .gateway.backends import BackendError
from .gateway.prompts import build_planner_prompt, fill, load_template
from .ingest import render_reference
from .oracle import check_commonsense

log = logging.getLogger(__name__)

ALL_SUCCESS = render_feedback(Feedback.all_successful())
FIELD_LABELS = ("reference information box:", "query:", "feedback:", "draft travel plan:")


@dataclass(frozen=True)
class Provenance:
    kind: str  # "annotated" | "sampled"
    temperature: Optional[float] = None
    seed: Optional[int] = None

    def to_json(self) -> dict:
        if self.kind == "annotated":
            return {"kind": "annotated"}
        return {"kind": self.kind, "temperature": self.temperature, "seed": self.seed}


@dataclass(frozen=True)
class FaftSample:
    ref_text: str
    query_text: str
    feedback_text: str
    plan_text: str
    provenance: Provenance
    query_id: str = ""

    @property
    def feedback_all_success(self) -> bool:
        return parse_feedback(self.feedback_text).all_success


def render_sft(sample: FaftSample) -> str:
    return fill(
        load_template("sft"),
        [("{ref}", sample.ref_text), ("{query}", sample.query_text), ("{plan}", sample.plan_text)],
    )


def render_faft(sample: FaftSample) -> str:
    return fill(
        load_template("faft"),
        [
            ("{ref}", sample.ref_text),
            ("{query}", sample.query_text),
            ("{feedback}", sample.feedback_text),
            ("{plan}", sample.plan_text),
        ],
    )


def render_faft_inference(ref_text: str, query_text: str) -> str:
    """Inference prompt: the template's fixed all-success block, ending at ``draft travel plan:``."""
    return fill(
        load_template("faft_inference"),
        [("{ref}", ref_text), ("{query}", query_text), ("{feedback}", "")],
    )


def split_faft(text: str) -> dict:
    """Inverse of :func:`render_faft` (field values must not contain the labels on a new line)."""
    out = {}
    rest = text
    keys = ("ref_text", "query_text", "feedback_text", "plan_text")
    for i, (key, label) in enumerate(zip(keys, FIELD_LABELS)):
        if not rest.startswith(label):
            raise ValueError(f"expected {label!r}")
        rest = rest[len(label):]
        if i + 1 < len(FIELD_LABELS):
            nxt = "\n" + FIELD_LABELS[i + 1]
            j = rest.find(nxt)
            if j < 0:
                raise ValueError(f"missing {FIELD_LABELS[i + 1]!r}")
            out[key], rest = rest[:j], rest[j + 1:]
        else:
            out[key] = rest
    return out


def annotated_samples(records: Sequence, ref_view=None) -> list:
    samples = []
    for r in records:
        ref = ref_view(r) if ref_view else r.reference
        fb = check_commonsense(r.plan, r.query, r.reference)
        if not fb.all_success:
            log.warning("annotated plan for %s does not pass the oracle: %s", r.query.id, fb.failed())
        samples.append(
            FaftSample(
                render_reference(ref),
                r.query.text,
                render_feedback(fb),
                render_plan(r.plan),
                Provenance("annotated"),
                r.query.id,
            )
        )
    return samples


def collect(
    records: Sequence,
    planner,
    samples_per_query: int,
    temperature: float = 1.0,
    seed: int = 0,
    shots: Sequence = (),
    ref_view=None,
    target_total: Optional[int] = None,
):
    """Sample plans, label them with oracle feedback, then add the annotated plans.

    ``ref_view(record)`` gives the sandbox shown to the planner (default: the
    full one); labels always use the full sandbox. With ``target_total`` the
    sampling stops once sampled + annotated reaches that size.

    Returns ``(samples, stats)``; ``stats`` counts requested, parsed and
    skipped (unparseable) plans. On a backend error the exception carries the
    partial result as ``exc.partial``.
    """
    records = list(records)
    budget = None if target_total is None else max(0, target_total - len(records))
    stats = Counter()
    sampled = []
    ref_texts: dict = {}
    try:
        for k in range(samples_per_query):
            for i, r in enumerate(records):
                if budget is not None and len(sampled) >= budget:
                    break
                if i not in ref_texts:
                    ref_texts[i] = render_reference(ref_view(r) if ref_view else r.reference)
                prompt = build_planner_prompt(r.query, ref_texts[i], shots)
                sample_seed = seed * 1_000_003 + k * len(records) + i
                stats["requested"] += 1
                reply = planner.complete(prompt, temperature=temperature, seed=sample_seed)
                plan, _ = parse_plan(reply, r.query.day_count)
                if plan is None:
                    stats["skipped"] += 1
                    continue
                stats["parsed"] += 1
                fb = check_commonsense(plan, r.query, r.reference)
                sampled.append(
                    FaftSample(
                        ref_texts[i],
                        r.query.text,
                        render_feedback(fb),
                        render_plan(plan),
                        Provenance("sampled", temperature, sample_seed),
                        r.query.id,
                    )
                )
    except BackendError as exc:
        exc.partial = (sampled + annotated_samples(records, ref_view), dict(stats))
        raise
    return sampled + annotated_samples(records, ref_view), dict(stats)


def emit_jsonl(samples: Sequence[FaftSample], path, shuffle_seed: Optional[int] = 0, template: str = "faft", extra_stats=None) -> dict:
    """Write one ``{text, provenance, feedback_all_success}`` object per line.

    The file is written to a temporary sibling and moved into place, so a
    failure never leaves a partial corpus behind.
    """
    render = {"faft": render_faft, "sft": render_sft}[template]
    order = list(range(len(samples)))
    if shuffle_seed is not None:
        random.Random(shuffle_seed).shuffle(order)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    positives = 0
    by_provenance = Counter()
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for i in order:
                s = samples[i]
                ok = s.feedback_all_success
                positives += ok
                by_provenance[s.provenance.kind] += 1
                fh.write(
                    json.dumps(
                        {"text": render(s), "provenance": s.provenance.to_json(), "feedback_all_success": ok},
                        ensure_ascii=False,
                    )
                    + "\n"
                )
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    manifest = {
        "path": str(path),
        "template": template,
        "total": len(samples),
        "by_provenance": dict(sorted(by_provenance.items())),
        "positive": positives,
        "negative": len(samples) - positives,
        "shuffle_seed": shuffle_seed,
    }
    if extra_stats:
        manifest["sampling"] = dict(extra_stats)
    return manifest
