"""Regenerate everything under tests/fixtures/ except samples/ and the hand-written goldens.

    python3 scripts/make_fixtures.py [--out tests/fixtures]

Deterministic: running it twice produces identical files. The hand-counted
eval6/golden_report.json is not written here and is never touched.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import re
import subprocess
from dataclasses import replace
from pathlib import Path

from planloop import synth
from planloop.codec import render_plan
from planloop.ingest import DatasetSplit, load_split, render_reference, write_split
from planloop.gateway.prompts import load_template

TRAIN_SEED, VAL_SEED, EVAL6_SEED = 1, 2, 3

SEATTLE_REF = {
    "flights.csv": """flight_number,origin,destination,departure_time,arrival_time,price,flight_date,distance
F3512104,Seattle,San Francisco,07:15,09:20,182,2022-03-06,679.0
F3520298,Seattle,San Francisco,17:40,19:52,154,2022-03-06,679.0
F3961230,San Francisco,Seattle,20:05,22:10,171,2022-03-08,679.0
""",
    "ground_routes.csv": """mode,origin,destination,duration,cost,distance
self-driving,Seattle,San Francisco,12 hours 28 mins,65,"1,307 km"
taxi,Seattle,San Francisco,12 hours 28 mins,1307,"1,307 km"
self-driving,San Francisco,Seattle,12 hours 25 mins,65,"1,305 km"
taxi,San Francisco,Seattle,12 hours 25 mins,1305,"1,305 km"
""",
    "restaurants.csv": """name,city,cuisines,average_cost,aggregate_rating,address
Anupam Eating Point,San Francisco,"Mexican, Indian",52,3.9,12 Mission St San Francisco
Coffee & Chai Co.,San Francisco,"American, Chinese",21,4.1,880 Valencia St San Francisco
Bonne Bouche,San Francisco,"French, Mediterranean",64,4.4,301 Hayes St San Francisco
Empress,San Francisco,"Chinese, Mediterranean",75,4.0,838 Grant Ave San Francisco
Gupta's Rasoi,San Francisco,"Indian, Mexican",38,3.6,45 Irving St San Francisco
Shammi Bhai Lassi Wala,San Francisco,"Indian, American",27,3.8,19 Clement St San Francisco
Golden Wok,San Francisco,Chinese,33,3.2,91 Stockton St San Francisco
""",
    "attractions.csv": """name,city,latitude,longitude,address
Golden Gate Bridge,San Francisco,37.8199,-122.4783,Golden Gate Bridge San Francisco CA
Golden Gate Park,San Francisco,37.7694,-122.4862,501 Stanyan St San Francisco CA
PIER 39,San Francisco,37.8087,-122.4098,The Embarcadero San Francisco CA
Alcatraz Island,San Francisco,37.8270,-122.4230,San Francisco CA 94133
""",
    "accommodations.csv": """name,city,price,room_type,house_rules,minimum_nights,maximum_occupancy,review_rate
"Room in Down town Brooklyn Parkslop",San Francisco,295,Private room,No parties & No smoking,1,4,4.0
Sunny Loft near Mission,San Francisco,410,Entire home/apt,No pets,2,6,4.5
Shared Bunk in SoMa,San Francisco,60,Shared room,No visitors,1,1,3.1
Bay View Suite,San Francisco,180,Entire home/apt,No smoking,3,4,4.6
""",
}

SEATTLE_QUERY = {
    "id": "seattle-sf",
    "origin": "Seattle",
    "destination_region": "San Francisco",
    "city_count": 1,
    "day_count": 3,
    "group_size": 4,
    "dates": ["2022-03-06", "2022-03-07", "2022-03-08"],
    "budget": 2900,
    "constraints": {
        "room_rule": "pets-allowed",
        "cuisines": ["American", "French", "Mediterranean", "Mexican"],
        "transportation": "no-flight",
    },
}

GARBAGE = "I'm sorry, but I can't produce a plan for this request."


def ragged(text: str) -> str:
    """Model-ish formatting noise that the parser must absorb."""
    out = []
    for i, line in enumerate(text.split("\n")):
        if line.startswith("Day "):
            line = line + " "
        elif i % 3 == 0 and line:
            line = line.replace(": ", ":  ", 1)
        out.append(line)
    return "\n".join(out)


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def make_splits(out: Path):
    train = DatasetSplit("train", tuple(synth.generate_split(TRAIN_SEED, 45)))
    val = DatasetSplit("validation", tuple(synth.generate_split(VAL_SEED, 20)))
    write_split(train, out / "train")
    write_split(val, out / "validation")
    return train, val


def make_scripts(out: Path, val: DatasetSplit) -> dict:
    """Scripted planner/refiner replies for the 20 validation queries.

    0-3 perfect; 4-15 one defect, fixed on the first refinement; 16 two
    defects with a garbage first refinement; 17 two defects fixed one per
    step; 18-19 a defect the refiner never fixes.
    """
    names = list(synth.DEFECTS)
    planner, refiner, expected = {}, {}, {}
    for i, r in enumerate(val.records):
        qid, good = r.query.id, r.plan
        good_text = render_plan(good)
        if i < 4:
            planner[qid] = [ragged(good_text) if i % 2 else good_text]
            expected[qid] = {"initial_defects": [], "final_all_success": True}
            continue
        if i < 16:
            name = names[(i - 4) % len(names)]
            fn, _ = synth.DEFECTS[name]
            bad = fn(good, r.reference)
            planner[qid] = [render_plan(bad)]
            refiner[qid] = [good_text]
            expected[qid] = {"initial_defects": [name], "final_all_success": True}
            continue
        one = synth.repeat_attraction(good, r.reference)
        both = synth.violate_min_nights(one, r.reference)
        planner[qid] = [render_plan(both)]
        if i == 16:
            refiner[qid] = [GARBAGE, good_text]
            expected[qid] = {"initial_defects": ["repeat_attraction", "violate_min_nights"], "final_all_success": True}
        elif i == 17:
            refiner[qid] = [render_plan(synth.violate_min_nights(good, r.reference)), good_text]
            expected[qid] = {"initial_defects": ["repeat_attraction", "violate_min_nights"], "final_all_success": True}
        else:
            refiner[qid] = [render_plan(both)] * 4
            expected[qid] = {"initial_defects": ["repeat_attraction", "violate_min_nights"], "final_all_success": False}
    write_json(out / "scripts" / "planner.json", planner)
    write_json(out / "scripts" / "refiner.json", refiner)
    write_json(out / "scripts" / "expected.json", expected)
    return expected


def make_configs(out: Path) -> None:
    base = {
        "name": "offline",
        "train": "train",
        "eval": "validation",
        "shots": 0,
        "refinement": {"variant": "oracle", "max_iters": 4},
        "backends": {
            "planner": {"kind": "scripted", "script": "scripts/planner.json"},
            "refiner": {"kind": "scripted", "script": "scripts/refiner.json"},
        },
        "output_dir": "runs",
    }
    write_json(out / "config_offline.json", base)
    write_json(out / "config_offline_scrubbed.json", {**base, "name": "offline-scrubbed", "scrub": True})


def make_eval6(out: Path) -> None:
    """Six outcomes with known verdicts; see golden_report.json for the hand count."""
    recs = synth.generate_split(EVAL6_SEED, 6)
    d = out / "eval6"
    # E2: same plan, budget far below its cost
    r2 = recs[1]
    low = 10000
    text2 = re.sub(r"\$[\d,]+", "$100", r2.query.text, count=1)
    q2 = replace(r2.query, text=text2, budget=low, hard_constraints=replace(r2.query.hard_constraints, budget=low))
    recs[1] = replace(r2, query=q2)
    split = DatasetSplit("validation", tuple(replace(r, plan=None) for r in recs))
    write_split(split, d)
    outcomes = [
        render_plan(recs[0].plan),
        render_plan(recs[1].plan),
        render_plan(synth.hallucinate_restaurant(recs[2].plan)),
        render_plan(synth.violate_min_nights(synth.repeat_attraction(recs[3].plan), recs[3].reference)),
        None,
        render_plan(synth.drop_meal(recs[5].plan)),
    ]
    tdir = d / "traces"
    tdir.mkdir(parents=True, exist_ok=True)
    for r, text in zip(recs, outcomes):
        row = {
            "query_id": r.query.id,
            "iteration": 0,
            "delivered": text is not None,
            "plan_text": text,
            "raw_text": text if text is not None else GARBAGE,
            "feedback_emitted": None,
            "oracle_truth": None,
            "refined": False,
            "warnings": [],
            "error": None,
        }
        (tdir / f"{r.query.id}.jsonl").write_text(json.dumps(row, sort_keys=True) + "\n", encoding="utf-8")
    write_json(d / "config.json", {"name": "eval6", "eval": ".", "output_dir": "runs"})
    summary = [
        {"id": r.query.id, "hard_constraints": sorted(k for k in ("room_rule", "room_type", "transportation") if getattr(r.query.hard_constraints, k)) + (["cuisine"] if r.query.hard_constraints.cuisines else []) + ["budget"]}
        for r in recs
    ]
    write_json(d / "applicable_hard.json", summary)


def make_seattle(out: Path, samples: Path) -> None:
    d = out / "seattle_sf"
    ref = d / "reference" / "seattle-sf"
    ref.mkdir(parents=True, exist_ok=True)
    for name, text in SEATTLE_REF.items():
        (ref / name).write_text(text, encoding="utf-8")
    q = dict(SEATTLE_QUERY, text=(samples / "seattle_sf_query.txt").read_text(encoding="utf-8").strip())
    (d / "queries.jsonl").write_text(json.dumps(q) + "\n", encoding="utf-8")
    # sanity: the split loads
    load_split("validation", d / "queries.jsonl", d / "reference")


def make_goldens(out: Path, train: DatasetSplit, samples: Path) -> None:
    g = out / "golden"
    g.mkdir(parents=True, exist_ok=True)
    hashes = {
        name: hashlib.sha256(load_template(name).encode("utf-8")).hexdigest()
        for name in ("planner", "feedback", "refiner", "sft", "faft", "faft_inference")
    }
    write_json(g / "template_sha256.json", hashes)

    # FAFT goldens: plain string substitution into the bundled templates,
    # independent of the package's fill() helper
    r = train.records[0]
    ref_text = render_reference(r.reference)
    plan_text = render_plan(r.plan)
    fb_text = (samples / "feedback_mixed.txt").read_text(encoding="utf-8").rstrip("\n")
    sft = load_template("sft").replace("{ref}", ref_text).replace("{query}", r.query.text).replace("{plan}", plan_text)
    faft = (
        load_template("faft")
        .replace("{ref}", ref_text)
        .replace("{query}", r.query.text)
        .replace("{feedback}", fb_text)
        .replace("{plan}", plan_text)
    )
    inf = load_template("faft_inference").replace("{ref}", ref_text).replace("{query}", r.query.text).replace("{feedback}", "")
    (g / "sft.txt").write_text(sft, encoding="utf-8")
    (g / "faft.txt").write_text(faft, encoding="utf-8")
    (g / "faft_inference.txt").write_text(inf, encoding="utf-8")
    write_json(g / "faft_sample.json", {"query_id": r.query.id, "feedback_file": "samples/feedback_mixed.txt"})

    # token proxy golden: count with coreutils wc, not with our tokenizer
    (g / "reference_render.txt").write_text(ref_text, encoding="utf-8")
    wc = subprocess.run(["wc", "-w"], input=ref_text.encode("utf-8"), capture_output=True, check=True)
    write_json(g / "token_count.json", {"file": "reference_render.txt", "wc_w": int(wc.stdout.split()[0])})


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "fixtures"))
    args = ap.parse_args()
    out = Path(args.out)
    samples = out / "samples"
    train, val = make_splits(out)
    make_scripts(out, val)
    make_configs(out)
    make_eval6(out)
    make_seattle(out, samples)
    make_goldens(out, train, samples)
    print(f"fixtures written to {out}")


if __name__ == "__main__":
    main()
