from __future__ import annotations

import json
import random

import pytest

from conftest import FIXTURES, sample
from planloop import synth
from planloop.codec import render_plan
from planloop.domain import parse_feedback
from planloop.faft import (
    ALL_SUCCESS,
    FaftSample,
    Provenance,
    annotated_samples,
    collect,
    emit_jsonl,
    render_faft,
    render_faft_inference,
    render_sft,
    split_faft,
)
from planloop.gateway import BackendError, ScriptedBackend
from planloop.ingest import render_reference

GOLDEN = FIXTURES / "golden"


def golden(name: str) -> str:
    return (GOLDEN / name).read_text(encoding="utf-8")


def golden_sample(train_split) -> FaftSample:
    meta = json.loads(golden("faft_sample.json"))
    r = next(x for x in train_split if x.query.id == meta["query_id"])
    fb = sample("feedback_mixed.txt").rstrip("\n")
    return FaftSample(render_reference(r.reference), r.query.text, fb, render_plan(r.plan), Provenance("annotated"), r.query.id)


def check_goldens(train_split) -> None:
    s = golden_sample(train_split)
    assert render_sft(s) == golden("sft.txt")
    assert render_faft(s) == golden("faft.txt")
    assert render_faft_inference(s.ref_text, s.query_text) == golden("faft_inference.txt")


def test_renderings_match_goldens(train_split):
    check_goldens(train_split)


def test_sft_has_no_feedback_and_faft_does(train_split):
    s = golden_sample(train_split)
    sft, faft = render_sft(s), render_faft(s)
    assert "feedback:" not in sft
    assert [l for l in sft.splitlines() if l.endswith(":") or ":" in l[:30]][:1]
    assert sft.count("reference information box:") == 1 and sft.count("draft travel plan:") == 1
    for label in ("reference information box:", "query:", "feedback:", "draft travel plan:"):
        assert faft.count("\n" + label) + faft.startswith(label) == 1
    assert s.feedback_text in faft


def test_inference_prompt_pins_all_success(train_split):
    s = golden_sample(train_split)
    text = render_faft_inference(s.ref_text, s.query_text)
    assert ALL_SUCCESS in text
    assert "is_not_absent: success" in text and "fail" not in text.split("feedback:")[1]
    assert text.endswith("draft travel plan:")


def test_split_faft_inverts_render(train_split):
    s = golden_sample(train_split)
    parts = split_faft(render_faft(s))
    assert parts == {"ref_text": s.ref_text, "query_text": s.query_text, "feedback_text": s.feedback_text, "plan_text": s.plan_text}
    with pytest.raises(ValueError):
        split_faft("query: x")


def test_collect_zero_samples_gives_annotated_only(train_split, tmp_path):
    samples, stats = collect(train_split, ScriptedBackend([]), samples_per_query=0)
    assert len(samples) == 45 and stats == {}
    manifest = emit_jsonl(samples, tmp_path / "c.jsonl")
    lines = [json.loads(l) for l in (tmp_path / "c.jsonl").read_text().splitlines()]
    assert len(lines) == 45 and manifest["total"] == 45 and manifest["positive"] == 45
    assert all(l["feedback_all_success"] and l["provenance"] == {"kind": "annotated"} for l in lines)


def _flawed(prompt_text: str, train_split):
    for r in train_split:
        if f"query:{r.query.text}" in prompt_text or f"Query: {r.query.text}\nTravel Plan:" in prompt_text:
            return render_plan(synth.repeat_attraction(r.plan))
    raise AssertionError("unknown query")


def test_sampled_flawed_plans_get_negative_feedback(train_split, tmp_path):
    records = train_split.records[:5]
    planner = ScriptedBackend(lambda p: _flawed(p, records))
    samples, stats = collect(records, planner, samples_per_query=2, temperature=0.9, seed=4)
    assert stats == {"requested": 10, "parsed": 10}
    sampled = [s for s in samples if s.provenance.kind == "sampled"]
    assert len(sampled) == 10 and not any(s.feedback_all_success for s in sampled)
    assert all("is_valid_attractions: fail" in s.feedback_text for s in sampled)
    assert {s.provenance.temperature for s in sampled} == {0.9}
    assert len({s.provenance.seed for s in sampled}) == 10
    m = emit_jsonl(samples, tmp_path / "c.jsonl")
    assert (m["positive"], m["negative"]) == (5, 10)
    assert m["by_provenance"] == {"annotated": 5, "sampled": 10}


def test_unparseable_samples_are_skipped(train_split):
    samples, stats = collect(train_split.records[:3], ScriptedBackend(lambda p: "no plan here"), samples_per_query=1)
    assert stats == {"requested": 3, "skipped": 3} and len(samples) == 3


def test_target_total_reaches_corpus_size(train_split):
    """A 45-record train split sampled until the corpus holds 14,800 samples."""
    plans = {r.query.text: render_plan(r.plan) for r in train_split}

    def planner(prompt):
        return plans[prompt.rsplit("Query: ", 1)[1].split("\nTravel Plan:")[0]]

    samples, stats = collect(train_split, ScriptedBackend(planner), samples_per_query=400, target_total=14_800)
    assert len(samples) == 14_800
    assert stats["parsed"] == 14_800 - 45


def test_backend_error_keeps_partial(train_split, tmp_path):
    replies = [render_plan(train_split.records[0].plan)]
    with pytest.raises(BackendError) as info:
        collect(train_split.records[:3], ScriptedBackend(replies), samples_per_query=1)
    partial, stats = info.value.partial
    assert stats == {"requested": 2, "parsed": 1} and len(partial) == 4


def test_emit_empty_and_sft(tmp_path):
    m = emit_jsonl([], tmp_path / "empty.jsonl")
    assert m["total"] == 0 and (tmp_path / "empty.jsonl").read_text() == ""


def test_shuffle_is_stable(train_split, tmp_path):
    samples = annotated_samples(train_split.records[:10])
    emit_jsonl(samples, tmp_path / "a.jsonl", shuffle_seed=3)
    emit_jsonl(samples, tmp_path / "b.jsonl", shuffle_seed=3)
    emit_jsonl(samples, tmp_path / "c.jsonl", shuffle_seed=None)
    a, b, c = ((tmp_path / f"{x}.jsonl").read_text() for x in "abc")
    assert a == b and a != c and sorted(a.splitlines()) == sorted(c.splitlines())


def test_label_matches_embedded_feedback(train_split, tmp_path):
    records = train_split.records[:4]
    rng = random.Random(0)

    def planner(prompt):
        r = next(x for x in records if f"Query: {x.query.text}\nTravel Plan:" in prompt)
        return render_plan(r.plan if rng.random() < 0.5 else synth.repeat_restaurant(r.plan))

    samples, _ = collect(records, ScriptedBackend(planner), samples_per_query=3)
    emit_jsonl(samples, tmp_path / "c.jsonl")
    for line in (tmp_path / "c.jsonl").read_text().splitlines():
        obj = json.loads(line)
        fb = parse_feedback(split_faft(obj["text"])["feedback_text"])
        assert fb.all_success == obj["feedback_all_success"]


def test_failed_write_leaves_no_partial_file(tmp_path):
    class Boom(FaftSample):
        @property
        def feedback_all_success(self):
            raise RuntimeError("boom")

    bad = Boom("r", "q", ALL_SUCCESS, "p", Provenance("annotated"))
    with pytest.raises(RuntimeError):
        emit_jsonl([bad], tmp_path / "x.jsonl")
    assert list(tmp_path.iterdir()) == []
