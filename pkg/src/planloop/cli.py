"""Command line entry point: ``planloop {scrub,plan,refine,eval,faft,report}``.

Every invocation writes into a fresh run directory under the configured
output dir, holding a copy of the config, a manifest, and the artifacts of
that command. Errors are reported as one JSON object on stderr with a
nonzero exit status.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import sys
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import yaml

from . import __version__
from .faft import collect, emit_jsonl
from .gateway.backends import Backend, BackendError, HttpBackend, RecordingBackend, ReplayBackend, ScriptedBackend
from .gateway.prompts import MAX_PLANNER_SHOTS, ROLES, draw_shots
from .ingest import IngestError, load_split_dir
from .metrics import GATES, MetricsReport, aggregate, evaluate, format_table, refinement_deltas
from .oracle import ORACLE_VERSION, check_commonsense
from .orchestrator import VARIANTS, FeedbackVariant, IterationTrace, run_direct, run_refinement
from .scrubber import extract_constraints_llm, extract_constraints_rules, scrub, scrubber_shots_from

log = logging.getLogger("planloop")

BACKEND_KINDS = ("scripted", "http", "replay")


class ConfigError(ValueError):
    pass


class ReportMismatch(ValueError):
    pass


# --- configuration ---------------------------------------------------------


@dataclass
class BackendConfig:
    kind: str = "scripted"
    script: Optional[str] = None  # scripted: JSON file (list, or stream id -> list)
    transcript: Optional[str] = None  # replay
    endpoint: Optional[str] = None  # http
    model: Optional[str] = None
    api_key_env: str = "OPENAI_API_KEY"
    timeout: float = 120.0
    temperature: float = 0.0
    max_tokens: Optional[int] = None
    seed: Optional[int] = None
    max_attempts: int = 3
    max_in_flight: int = 4
    min_interval: float = 0.0


@dataclass
class RefinementConfig:
    variant: str = "oracle"
    max_iters: int = 4
    fail_probability: float = 0.5


@dataclass
class FaftConfig:
    samples_per_query: int = 0
    temperature: float = 1.0
    target_total: Optional[int] = None
    template: str = "faft"
    shuffle_seed: int = 0


@dataclass
class ExperimentConfig:
    name: str = "run"
    train: Optional[str] = None
    eval: Optional[str] = None
    eval_split: str = "validation"
    scrub: bool = False
    scrub_extractor: str = "rules"  # rules | llm
    shots: int = 0
    strategy: str = "direct"
    refinement: RefinementConfig = field(default_factory=RefinementConfig)
    faft: FaftConfig = field(default_factory=FaftConfig)
    backends: dict = field(default_factory=dict)  # role -> BackendConfig
    seed: int = 0
    gate: str = "commonsense"
    output_dir: str = "runs"  # relative to the working directory

    def to_json(self) -> dict:
        return dataclasses.asdict(self)

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()


def _build(cls, data, where: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    return cls(**data)


def config_from_dict(data: dict, base_dir: Optional[Path] = None) -> ExperimentConfig:
    data = dict(data)
    if "refinement" in data:
        data["refinement"] = _build(RefinementConfig, data["refinement"], "refinement")
    if "faft" in data:
        data["faft"] = _build(FaftConfig, data["faft"], "faft")
    if "backends" in data:
        if not isinstance(data["backends"], dict):
            raise ConfigError("backends: expected a mapping of role -> backend")
        data["backends"] = {
            role: b if isinstance(b, BackendConfig) else _build(BackendConfig, b, f"backends.{role}")
            for role, b in data["backends"].items()
        }
    cfg = _build(ExperimentConfig, data, "config")
    if base_dir is not None:
        _resolve_paths(cfg, Path(base_dir))
    validate(cfg)
    return cfg


def _resolve_paths(cfg: ExperimentConfig, base: Path) -> None:
    def fix(p):
        return None if p is None else str((base / p).resolve()) if not Path(p).is_absolute() else p

    cfg.train, cfg.eval = fix(cfg.train), fix(cfg.eval)
    for b in cfg.backends.values():
        b.script, b.transcript = fix(b.script), fix(b.transcript)


def validate(cfg: ExperimentConfig) -> None:
    """Static checks; runs before any backend is contacted."""
    if cfg.strategy != "direct":
        raise ConfigError(f"strategy {cfg.strategy!r} not supported (only 'direct')")
    if not 0 <= cfg.shots <= MAX_PLANNER_SHOTS:
        raise ConfigError(f"shots must be in 0..{MAX_PLANNER_SHOTS}")
    if cfg.refinement.variant not in VARIANTS:
        raise ConfigError(f"refinement.variant must be one of {VARIANTS}")
    if cfg.refinement.max_iters < 1:
        raise ConfigError("refinement.max_iters must be >= 1")
    if cfg.gate not in GATES:
        raise ConfigError(f"gate must be one of {GATES}")
    if cfg.scrub_extractor not in ("rules", "llm"):
        raise ConfigError("scrub_extractor must be 'rules' or 'llm'")
    if cfg.faft.template not in ("faft", "sft"):
        raise ConfigError("faft.template must be 'faft' or 'sft'")
    if cfg.faft.samples_per_query < 0:
        raise ConfigError("faft.samples_per_query must be >= 0")
    for role, b in cfg.backends.items():
        if role not in ROLES:
            raise ConfigError(f"backends: unknown role {role!r}")
        if b.kind not in BACKEND_KINDS:
            raise ConfigError(f"backends.{role}: kind must be one of {BACKEND_KINDS}")
        if b.kind == "scripted" and not b.script:
            raise ConfigError(f"backends.{role}: scripted backend needs 'script'")
        if b.kind == "http" and not (b.endpoint and b.model):
            raise ConfigError(f"backends.{role}: http backend needs 'endpoint' and 'model'")
        if b.kind == "replay" and not b.transcript:
            raise ConfigError(f"backends.{role}: replay backend needs 'transcript'")
    for key in ("train", "eval"):
        p = getattr(cfg, key)
        if p is not None and not Path(p).is_dir():
            raise ConfigError(f"{key}: no such split directory {p}")


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    return config_from_dict(data or {}, base_dir=path.parent)


# --- run context -----------------------------------------------------------


class Run:
    """One invocation: its directory, backends and manifest."""

    def __init__(self, command: str, cfg: ExperimentConfig, args):
        self.command = command
        self.cfg = cfg
        self.config_sha256 = cfg.sha256()
        self.replay = Path(args.replay) if getattr(args, "replay", None) else None
        self.record = bool(getattr(args, "record", False))
        self.jobs = max(1, getattr(args, "jobs", 1) or 1)
        self.seed = args.seed if getattr(args, "seed", None) is not None else cfg.seed
        stamp = dt.datetime.now(dt.timezone.utc).strftime("%Y%m%dT%H%M%S")
        self.run_id = f"{command}-{stamp}-{uuid.uuid4().hex[:6]}"
        self.dir = Path(args.output or cfg.output_dir) / self.run_id
        self.dir.mkdir(parents=True, exist_ok=False)
        self._backends: dict = {}
        self.outputs: list = []
        self.extra: dict = {}
        self.write_json("config.json", cfg.to_json(), track=False)

    def backend(self, role: str) -> Backend:
        if role in self._backends:
            return self._backends[role]
        if self.replay is not None:
            path = self.replay / "transcripts" / f"{role}.jsonl"
            if not path.exists():
                raise ConfigError(f"replay: no transcript for role {role!r} in {self.replay}")
            b: Backend = ReplayBackend(path)
        else:
            bc = self.cfg.backends.get(role)
            if bc is None:
                raise ConfigError(f"no backend configured for role {role!r}")
            common = dict(
                temperature=bc.temperature,
                max_tokens=bc.max_tokens,
                seed=bc.seed,
                max_in_flight=bc.max_in_flight,
                min_interval=bc.min_interval,
            )
            if bc.kind == "scripted":
                b = ScriptedBackend.from_file(bc.script, **common)
            elif bc.kind == "replay":
                b = ReplayBackend(bc.transcript, **common)
            else:
                b = HttpBackend(
                    bc.endpoint,
                    bc.model,
                    api_key_env=bc.api_key_env,
                    timeout=bc.timeout,
                    max_attempts=bc.max_attempts,
                    **common,
                )
        if self.record:
            b = RecordingBackend(b, self.dir / "transcripts" / f"{role}.jsonl")
        self._backends[role] = b
        return b

    def path(self, rel: str) -> Path:
        p = self.dir / rel
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def write_json(self, rel: str, obj, track: bool = True) -> Path:
        p = self.path(rel)
        p.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if track:
            self.outputs.append(rel)
        return p

    def write_text(self, rel: str, text: str) -> Path:
        p = self.path(rel)
        p.write_text(text, encoding="utf-8")
        self.outputs.append(rel)
        return p

    def finish(self) -> dict:
        manifest = {
            "run_id": self.run_id,
            "command": self.command,
            "version": __version__,
            "oracle_version": ORACLE_VERSION,
            "config_sha256": self.config_sha256,
            "seed": self.seed,
            "jobs": self.jobs,
            "replay_from": str(self.replay) if self.replay else None,
            "record": self.record,
            "backends": {role: b.describe() for role, b in sorted(self._backends.items())},
            "outputs": sorted(self.outputs),
            "created": dt.datetime.now(dt.timezone.utc).isoformat(),
            **self.extra,
        }
        self.write_json("manifest.json", manifest, track=False)
        return manifest

    def map(self, fn, items):
        items = list(items)
        if self.jobs <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(fn, items))


def _split(path: Optional[str], name: str, what: str):
    if path is None:
        raise ConfigError(f"config has no {what} split")
    return load_split_dir(name, path)


def _eval_split(cfg):
    return _split(cfg.eval, cfg.eval_split, "eval")


def _train_split(cfg):
    return _split(cfg.train, "train", "train")


def _constraints(run: Run, query, shots):
    if run.cfg.scrub_extractor == "llm":
        c, fallback = extract_constraints_llm(query.text, run.backend("scrubber"), shots)
        return c, fallback
    return extract_constraints_rules(query.text), False


def _planner_view(run: Run, records, scrub_shots=()):
    """Per query id: the sandbox shown to the agents and its scrub report (if any)."""
    out = {}
    for r in records:
        if not run.cfg.scrub:
            out[r.query.id] = (r.reference, None)
            continue
        c, fallback = _constraints(run, r.query, scrub_shots)
        view, report = scrub(r.reference, c)
        out[r.query.id] = (view, {"query_id": r.query.id, "extracted_fallback": fallback, **report.to_json()})
    return out


def _scrub_shots(run: Run):
    if run.cfg.scrub and run.cfg.scrub_extractor == "llm":
        return scrubber_shots_from(draw_shots(_train_split(run.cfg).records, 3, run.seed))
    return ()


def _write_traces(run: Run, traces_by_query: dict) -> None:
    for qid, traces in traces_by_query.items():
        lines = [json.dumps({**t.to_json(), "config_sha256": run.config_sha256}, sort_keys=True) for t in traces]
        run.write_text(f"traces/{qid}.jsonl", "\n".join(lines) + "\n")


def read_traces(directory, day_counts: dict) -> dict:
    """``query_id -> [IterationTrace]`` from ``<directory>/traces/*.jsonl`` (or the directory itself)."""
    directory = Path(directory)
    tdir = directory / "traces" if (directory / "traces").is_dir() else directory
    out = {}
    for p in sorted(tdir.glob("*.jsonl")):
        rows = [json.loads(line) for line in p.read_text(encoding="utf-8").splitlines() if line.strip()]
        if not rows:
            continue
        qid = rows[0]["query_id"]
        if qid not in day_counts:
            raise ConfigError(f"trace {p.name} refers to unknown query {qid!r}")
        out[qid] = [IterationTrace.from_json(r, day_counts[qid]) for r in rows]
    if not out:
        raise ConfigError(f"no traces found in {directory}")
    return out


# --- commands --------------------------------------------------------------


def cmd_scrub(run: Run, args) -> None:
    split = _eval_split(run.cfg)
    shots = _scrub_shots(run)
    reports = []
    for r in split.records:
        c, fallback = _constraints(run, r.query, shots)
        _, report = scrub(r.reference, c)
        row = {"query_id": r.query.id, "extracted_fallback": fallback, **report.to_json()}
        reports.append(row)
        run.write_json(f"scrub/{r.query.id}.json", row)
    before = sum(x["tokens_before"] for x in reports)
    after = sum(x["tokens_after"] for x in reports)
    summary = {
        "config_sha256": run.config_sha256,
        "queries": len(reports),
        "tokens_before": before,
        "tokens_after": after,
        "reduction_ratio": round(1 - after / before, 4) if before else 0.0,
    }
    run.write_json("scrub_summary.json", summary)
    run.extra["summary"] = summary


def _plan_shots(run: Run, train, qid: str) -> list:
    if run.cfg.shots == 0:
        return []
    picked = draw_shots(train.records, run.cfg.shots, run.seed, exclude=qid)
    return [(s.query, s.reference, s.plan) for s in picked]


def cmd_plan(run: Run, args) -> None:
    split = _eval_split(run.cfg)
    train = _train_split(run.cfg) if run.cfg.shots else None
    views = _planner_view(run, split.records, _scrub_shots(run))
    planner = run.backend("planner")

    def one(r):
        view, _ = views[r.query.id]
        return run_direct(r.query, view, planner, _plan_shots(run, train, r.query.id), scoring_ref=r.reference)

    traces = run.map(one, split.records)
    _write_traces(run, {t.query_id: [t] for t in traces})
    for qid, (_, rep) in views.items():
        if rep is not None:
            run.write_json(f"scrub/{qid}.json", rep)
    run.extra["queries"] = len(traces)
    run.extra["delivered"] = sum(t.delivered for t in traces)


def _feedback_shots(run: Run) -> list:
    train = _train_split(run.cfg).records
    from .synth import repeat_attraction

    a, b = draw_shots(train, 2, run.seed)
    flawed = repeat_attraction(b.plan) or b.plan
    return [
        (a.query, a.reference, a.plan, check_commonsense(a.plan, a.query, a.reference)),
        (b.query, b.reference, flawed, check_commonsense(flawed, b.query, b.reference)),
    ]


def cmd_refine(run: Run, args) -> None:
    if not args.traces:
        raise ConfigError("refine needs --traces pointing at a plan run")
    split = _eval_split(run.cfg)
    initial = read_traces(args.traces, {r.query.id: r.query.day_count for r in split.records})
    rc = run.cfg.refinement
    if rc.variant == "oracle":
        variant = FeedbackVariant.oracle()
    elif rc.variant == "random":
        variant = FeedbackVariant.random(run.seed, rc.fail_probability)
    else:
        variant = FeedbackVariant.llm(run.backend("feedback"), _feedback_shots(run))
    records = [r for r in split.records if r.query.id in initial]
    views = _planner_view(run, records, _scrub_shots(run))
    refiner = run.backend("refiner")

    def one(r):
        view, _ = views[r.query.id]
        first = initial[r.query.id][0]
        return run_refinement(r.query, view, first, variant, refiner, rc.max_iters, scoring_ref=r.reference)

    results = run.map(one, records)
    _write_traces(run, {r.query.id: t for r, t in zip(records, results)})
    run.extra["queries"] = len(results)
    run.extra["variant"] = rc.variant
    run.extra["aborted"] = sorted(t[-1].query_id for t in results if t[-1].error)


def evaluate_traces(traces: dict, split, gate: str) -> dict:
    """Per-iteration metrics and deltas against iteration 0; the last iteration is the final report."""
    by_id = split.by_id()
    qids = sorted(traces)
    depth = {len(traces[q]) for q in qids}
    if len(depth) != 1:
        raise ConfigError(f"trace lengths differ across queries: {sorted(depth)}")
    n_iter = depth.pop()
    per_iter = []
    for it in range(n_iter):
        per_iter.append(
            [evaluate(traces[q][it].plan, by_id[q].query, by_id[q].reference, gate=gate) for q in qids]
        )
    iterations = []
    for it, recs in enumerate(per_iter):
        entry = {"iteration": it, "metrics": aggregate(recs, gate).to_json()}
        if it > 0:
            entry["deltas"] = refinement_deltas(per_iter[0], recs).to_json()
        iterations.append(entry)
    final = iterations[-1]
    return {
        "oracle_version": ORACLE_VERSION,
        "gate": gate,
        "queries": len(qids),
        "iterations": iterations,
        "final": final["metrics"],
        "final_deltas": final.get("deltas"),
        "records": [r.to_json() for r in per_iter[-1]],
    }


def cmd_eval(run: Run, args) -> None:
    if not args.traces:
        raise ConfigError("eval needs --traces")
    split = _eval_split(run.cfg)
    traces = read_traces(args.traces, {r.query.id: r.query.day_count for r in split.records})
    report = evaluate_traces(traces, split, run.cfg.gate)
    report["config_sha256"] = run.config_sha256
    run.write_json("report.json", report)
    rows = [(f"iter {e['iteration']}", MetricsReport(**e["metrics"])) for e in report["iterations"]]
    deltas = [None] + [
        _delta_from_json(e["deltas"]) for e in report["iterations"][1:]
    ]
    run.write_text("report.txt", format_table(rows, deltas if len(rows) > 1 else None) + "\n")
    run.extra["final"] = report["final"]


def _delta_from_json(d):
    from .metrics import DeltaReport

    return DeltaReport(**d)


def cmd_faft(run: Run, args) -> None:
    fc = run.cfg.faft
    train = _train_split(run.cfg)
    planner = run.backend("planner") if fc.samples_per_query else None
    views = _planner_view(run, train.records, _scrub_shots(run))
    samples, stats = collect(
        train.records,
        planner,
        fc.samples_per_query,
        temperature=fc.temperature,
        seed=run.seed,
        ref_view=lambda r: views[r.query.id][0],
        target_total=fc.target_total,
    )
    manifest = emit_jsonl(samples, run.path(f"corpus.{fc.template}.jsonl"), fc.shuffle_seed, fc.template, stats)
    manifest["path"] = f"corpus.{fc.template}.jsonl"
    manifest["config_sha256"] = run.config_sha256
    run.outputs.append(manifest["path"])
    run.write_json("corpus_manifest.json", manifest)
    run.extra["corpus"] = {k: manifest[k] for k in ("total", "positive", "negative")}


def compare_reports(paths: list) -> tuple:
    """Load ``report.json`` files; returns ``(table_text, rows_json)``. Refuses mixed oracle versions."""
    loaded = []
    for p in paths:
        p = Path(p)
        if p.is_dir():
            p = p / "report.json"
        loaded.append((p, json.loads(p.read_text(encoding="utf-8"))))
    versions = {r.get("oracle_version") for _, r in loaded}
    if len(versions) != 1:
        raise ReportMismatch(f"reports come from different oracle versions: {sorted(map(str, versions))}")
    base = MetricsReport(**loaded[0][1]["final"])
    keys = [k for k, _ in MetricsReport.COLUMNS]
    header = ["Run"] + [t for _, t in MetricsReport.COLUMNS] + [f"Δ {t}" for _, t in MetricsReport.COLUMNS]
    body, rows = [], []
    for p, r in loaded:
        rep = MetricsReport(**r["final"])
        bad = rep.invariant_violations()
        if bad:
            raise ReportMismatch(f"{p}: metric invariants violated: {bad}")
        label = p.parent.name or str(p)
        delta = {k: round(getattr(rep, k) - getattr(base, k), 1) for k in keys}
        body.append([label] + [f"{getattr(rep, k):.1f}" for k in keys] + [f"{delta[k]:+.1f}" for k in keys])
        rows.append({"run": label, "path": str(p), "config_sha256": r.get("config_sha256"), "final": rep.to_json(), "delta": delta})
    widths = [max(len(row[c]) for row in [header] + body) for c in range(len(header))]
    lines = ["  ".join(s.ljust(w) if j == 0 else s.rjust(w) for j, (s, w) in enumerate(zip(row, widths))) for row in [header] + body]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines), rows


def cmd_report(run: Run, args) -> None:
    if len(args.reports) < 1:
        raise ConfigError("report needs at least one report path")
    table, rows = compare_reports(args.reports)
    run.write_text("comparison.txt", table + "\n")
    run.write_json("comparison.json", {"config_sha256": run.config_sha256, "oracle_version": ORACLE_VERSION, "rows": rows})
    print(table)


COMMANDS = {
    "scrub": cmd_scrub,
    "plan": cmd_plan,
    "refine": cmd_refine,
    "eval": cmd_eval,
    "faft": cmd_faft,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="planloop", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="experiment config (JSON or YAML)")
        p.add_argument("--replay", metavar="DIR", help="serve model replies from DIR/transcripts")
        p.add_argument("--record", action="store_true", help="record model exchanges into the run directory")
        p.add_argument("--jobs", type=int, default=1, help="queries processed in parallel")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--output", help="override the config output_dir")
        p.add_argument("-v", "--verbose", action="store_true")
        if name in ("refine", "eval"):
            p.add_argument("--traces", metavar="DIR", help="run directory (or traces dir) to read")
        if name == "report":
            p.add_argument("reports", nargs="+", help="report.json files or eval run directories")
    return ap


def _fail(kind: str, message: str, code: int, **extra) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message, **extra}) + "\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            cfg = load_config(args.config)
        elif args.replay and (Path(args.replay) / "config.json").exists():
            cfg = config_from_dict(json.loads((Path(args.replay) / "config.json").read_text()))
        else:
            cfg = config_from_dict({})
        run = Run(args.command, cfg, args)
        COMMANDS[args.command](run, args)
        manifest = run.finish()
    except (ConfigError, ReportMismatch) as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    except IngestError as exc:
        return _fail(type(exc).__name__, str(exc), 2)
    except BackendError as exc:
        return _fail(type(exc).__name__, str(exc), 3, status=exc.status, retriable=exc.retriable)
    except (OSError, ValueError, KeyError) as exc:
        return _fail(type(exc).__name__, str(exc), 1)
    print(json.dumps({"run_dir": str(run.dir), "command": args.command, "outputs": manifest["outputs"]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
