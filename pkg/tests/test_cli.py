from __future__ import annotations

import json
import shutil
from pathlib import Path

import pytest

from conftest import FIXTURES
from planloop.cli import config_from_dict, load_config, main
from planloop.cli import ConfigError


def run_cli(capsys, *argv) -> dict:
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    assert code == 0, err
    return json.loads(out.strip().splitlines()[-1])


def offline_pipeline(capsys, out: Path, config=FIXTURES / "config_offline.json", record=False):
    """plan -> refine -> eval with the scripted backends; returns the three run dirs."""
    extra = ["--record"] if record else []
    plan = Path(run_cli(capsys, "plan", "--config", config, "--output", out, *extra)["run_dir"])
    refine = Path(run_cli(capsys, "refine", "--config", config, "--output", out, "--traces", plan, *extra)["run_dir"])
    ev = Path(run_cli(capsys, "eval", "--config", config, "--output", out, "--traces", refine)["run_dir"])
    return plan, refine, ev


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"name": "x", "refinment": {}}))
    assert main(["eval", "--config", str(cfg)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["error"] == "ConfigError" and "refinment" in err["message"]


def test_yaml_config_and_relative_paths(tmp_path):
    (tmp_path / "data").mkdir()
    (tmp_path / "c.yaml").write_text("name: y\neval: data\nrefinement:\n  max_iters: 2\n")
    cfg = load_config(tmp_path / "c.yaml")
    assert cfg.eval == str(tmp_path / "data") and cfg.refinement.max_iters == 2
    with pytest.raises(ConfigError):
        config_from_dict({"refinement": {"variant": "psychic"}})


def test_eval6_matches_hand_count(tmp_path, capsys):
    res = run_cli(capsys, "eval", "--config", FIXTURES / "eval6" / "config.json", "--output", tmp_path, "--traces", FIXTURES / "eval6")
    report = json.loads((Path(res["run_dir"]) / "report.json").read_text())
    golden = json.loads((FIXTURES / "eval6" / "golden_report.json").read_text())
    for key, value in golden.items():
        if not key.startswith("_"):
            assert report["final"][key] == value, key
    applicable = json.loads((FIXTURES / "eval6" / "applicable_hard.json").read_text())
    assert {r["query_id"]: set(r["hard"]) for r in report["records"]} == {a["id"]: set(a["hard_constraints"]) for a in applicable}
    manifest = json.loads((Path(res["run_dir"]) / "manifest.json").read_text())
    assert manifest["command"] == "eval" and "report.json" in manifest["outputs"]


def test_offline_pipeline(tmp_path, capsys):
    plan, refine, ev = offline_pipeline(capsys, tmp_path)
    traces = sorted((refine / "traces").glob("*.jsonl"))
    assert len(traces) == 20
    expected = json.loads((FIXTURES / "scripts" / "expected.json").read_text())
    for p in traces:
        rows = [json.loads(l) for l in p.read_text().splitlines()]
        assert len(rows) == 5 and [r["iteration"] for r in rows] == list(range(5))
        want = expected[rows[0]["query_id"]]
        assert ("fail" in rows[0]["oracle_truth"]) == bool(want["initial_defects"])
        assert ("fail" not in rows[-1]["oracle_truth"]) == want["final_all_success"]
    report = json.loads((ev / "report.json").read_text())
    assert report["final"]["delivery_rate"] == 100.0
    d = report["final_deltas"]
    assert abs(d["uplift_ratio"] + d["flat_ratio"] + d["downgrade_ratio"] - 100.0) <= 0.1
    assert "Uplift" in (ev / "report.txt").read_text()


def test_record_then_replay_is_byte_identical(tmp_path, capsys):
    plan, refine, _ = offline_pipeline(capsys, tmp_path / "a", record=True)
    assert (plan / "transcripts" / "planner.jsonl").exists()
    assert (refine / "transcripts" / "refiner.jsonl").exists()
    cfg = FIXTURES / "config_offline.json"
    plan2 = Path(run_cli(capsys, "plan", "--config", cfg, "--replay", plan, "--output", tmp_path / "b")["run_dir"])
    refine2 = Path(
        run_cli(capsys, "refine", "--config", cfg, "--replay", refine, "--traces", plan2, "--output", tmp_path / "b")["run_dir"]
    )
    for a, b in ((plan, plan2), (refine, refine2)):
        names = sorted(p.name for p in (a / "traces").glob("*.jsonl"))
        assert names == sorted(p.name for p in (b / "traces").glob("*.jsonl"))
        for n in names:
            assert (a / "traces" / n).read_bytes() == (b / "traces" / n).read_bytes()


def test_replay_without_transcript_is_a_config_error(tmp_path, capsys):
    empty = tmp_path / "empty"
    (empty / "transcripts").mkdir(parents=True)
    code = main(["plan", "--config", str(FIXTURES / "config_offline.json"), "--replay", str(empty), "--output", str(tmp_path)])
    assert code == 2


def test_replay_miss_is_recorded_per_query(tmp_path, capsys):
    empty = tmp_path / "empty"
    (empty / "transcripts").mkdir(parents=True)
    (empty / "transcripts" / "planner.jsonl").write_text("")
    res = run_cli(capsys, "plan", "--config", FIXTURES / "config_offline.json", "--replay", empty, "--output", tmp_path)
    rows = [json.loads(p.read_text()) for p in (Path(res["run_dir"]) / "traces").glob("*.jsonl")]
    assert len(rows) == 20 and all(r["error"].startswith("TranscriptMiss") and not r["delivered"] for r in rows)


def test_parallel_jobs_give_same_traces(tmp_path, capsys):
    cfg = FIXTURES / "config_offline.json"
    a = Path(run_cli(capsys, "plan", "--config", cfg, "--output", tmp_path)["run_dir"])
    b = Path(run_cli(capsys, "plan", "--config", cfg, "--output", tmp_path, "--jobs", "4")["run_dir"])
    for p in (a / "traces").glob("*.jsonl"):
        assert p.read_bytes() == (b / "traces" / p.name).read_bytes()


def test_report_compares_runs(tmp_path, capsys):
    _, _, ev = offline_pipeline(capsys, tmp_path / "x")
    _, _, ev2 = offline_pipeline(capsys, tmp_path / "y", config=FIXTURES / "config_offline_scrubbed.json")
    res = run_cli(capsys, "report", "--output", tmp_path, ev, ev2)
    table = (Path(res["run_dir"]) / "comparison.txt").read_text()
    assert "Δ Final" in table and ev.name in table and ev2.name in table
    assert "+0.0" in table.splitlines()[2]


def test_report_refuses_mixed_oracle_versions(tmp_path, capsys):
    _, _, ev = offline_pipeline(capsys, tmp_path / "x")
    other = tmp_path / "other"
    shutil.copytree(ev, other)
    data = json.loads((other / "report.json").read_text())
    data["oracle_version"] = "0.0-legacy"
    (other / "report.json").write_text(json.dumps(data))
    assert main(["report", "--output", str(tmp_path), str(ev), str(other)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "ReportMismatch"


def test_scrub_command(tmp_path, capsys):
    res = run_cli(capsys, "scrub", "--config", FIXTURES / "config_offline_scrubbed.json", "--output", tmp_path)
    summary = json.loads((Path(res["run_dir"]) / "scrub_summary.json").read_text())
    assert summary["queries"] == 20 and summary["reduction_ratio"] >= 0.5
    assert len(list((Path(res["run_dir"]) / "scrub").glob("*.json"))) == 20


def test_faft_command(tmp_path, capsys):
    res = run_cli(capsys, "faft", "--config", FIXTURES / "config_offline.json", "--output", tmp_path)
    run_dir = Path(res["run_dir"])
    manifest = json.loads((run_dir / "corpus_manifest.json").read_text())
    assert manifest["total"] == 45 and manifest["positive"] == 45
    assert len((run_dir / "corpus.faft.jsonl").read_text().splitlines()) == 45


def test_refine_without_traces_is_a_config_error(tmp_path, capsys):
    assert main(["refine", "--config", str(FIXTURES / "config_offline.json"), "--output", str(tmp_path)]) == 2
    assert "traces" in json.loads(capsys.readouterr().err)["message"]
