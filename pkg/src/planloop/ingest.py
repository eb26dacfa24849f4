"""Load and write dataset splits.

On-disk layout of a split::

    queries.jsonl                 one query per line
    plans.jsonl                   train only: {"query_id", "plan_text"}
    reference/<query_id>/*.csv    flights, ground_routes, restaurants,
                                  attractions, accommodations

Money columns are dollars. ``cuisines`` and ``house_rules`` are
``", "``- and ``" & "``-joined lists. Columns not listed in ``COLUMNS`` are
kept as per-row extras.
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .codec import parse_plan
from .domain import (
    ROOM_TYPE_ALIASES,
    TABLES,
    Accommodation,
    Attraction,
    DomainError,
    Flight,
    GroundRoute,
    HardConstraintSet,
    Plan,
    ReferenceBundle,
    Restaurant,
    TripQuery,
    format_money,
    parse_date,
    to_cents,
)

COLUMNS = {
    "flights": ("flight_number", "origin", "destination", "departure_time", "arrival_time", "price"),
    "ground_routes": ("mode", "origin", "destination", "duration", "cost"),
    "restaurants": ("name", "city", "cuisines", "average_cost"),
    "attractions": ("name", "city"),
    "accommodations": (
        "name",
        "city",
        "price",
        "room_type",
        "house_rules",
        "minimum_nights",
        "maximum_occupancy",
    ),
}
SPLITS = ("train", "validation", "test")


class IngestError(Exception):
    pass


class MalformedRecord(IngestError):
    def __init__(self, path, line, cause):
        self.path, self.line, self.cause = str(path), line, cause
        super().__init__(f"{path}:{line}: {cause}")


class MissingReference(IngestError):
    def __init__(self, query_id):
        self.query_id = query_id
        super().__init__(f"no reference directory for query {query_id!r}")


class SchemaMismatch(IngestError):
    def __init__(self, table, column, detail=""):
        self.table, self.column = table, column
        super().__init__(f"{table}: {column}" + (f" ({detail})" if detail else ""))


@dataclass(frozen=True)
class SplitRecord:
    query: TripQuery
    reference: ReferenceBundle
    plan: Optional[Plan] = None
    plan_text: Optional[str] = None


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    records: tuple

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def by_id(self) -> dict:
        return {r.query.id: r for r in self.records}


# --- queries ---------------------------------------------------------------


def query_from_json(obj: dict) -> TripQuery:
    c = obj.get("constraints") or {}
    budget = to_cents(obj["budget"])
    hard = HardConstraintSet(
        room_rule=c.get("room_rule"),
        room_type=c.get("room_type"),
        cuisines=frozenset(c.get("cuisines") or ()),
        budget=budget,
        transportation=c.get("transportation"),
    )
    return TripQuery(
        id=str(obj["id"]),
        text=obj["text"],
        origin_city=obj["origin"],
        destination_region=obj["destination_region"],
        city_count=int(obj["city_count"]),
        day_count=int(obj["day_count"]),
        group_size=int(obj["group_size"]),
        dates=tuple(parse_date(d) for d in obj["dates"]),
        budget=budget,
        hard_constraints=hard,
    )


def query_to_json(q: TripQuery) -> dict:
    hc = q.hard_constraints
    constraints: dict = {"cuisines": sorted(hc.cuisines)}
    for key in ("room_rule", "room_type", "transportation"):
        if getattr(hc, key) is not None:
            constraints[key] = getattr(hc, key)
    return {
        "id": q.id,
        "text": q.text,
        "origin": q.origin_city,
        "destination_region": q.destination_region,
        "city_count": q.city_count,
        "day_count": q.day_count,
        "group_size": q.group_size,
        "dates": [d.isoformat() for d in q.dates],
        "budget": q.budget // 100 if q.budget % 100 == 0 else q.budget / 100,
        "constraints": constraints,
    }


def _read_jsonl(path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(path, line_no, f"invalid JSON: {exc.msg}") from None
            if not isinstance(obj, dict):
                raise MalformedRecord(path, line_no, "record is not an object")
            yield line_no, obj


# --- reference tables ------------------------------------------------------


def _split_list(value: str, sep: str) -> tuple:
    return tuple(v.strip() for v in value.split(sep) if v.strip())


def _row(table: str, r: dict, extra: tuple):
    if table == "flights":
        return Flight(
            r["flight_number"].strip(),
            r["origin"].strip(),
            r["destination"].strip(),
            r["departure_time"].strip(),
            r["arrival_time"].strip(),
            to_cents(r["price"]),
            extra,
        )
    if table == "ground_routes":
        mode = r["mode"].strip().lower().replace(" ", "-")
        if mode not in ("self-driving", "taxi"):
            raise DomainError(f"unknown ground mode {r['mode']!r}")
        return GroundRoute(mode, r["origin"].strip(), r["destination"].strip(), r["duration"].strip(), to_cents(r["cost"]), extra)
    if table == "restaurants":
        return Restaurant(r["name"].strip(), r["city"].strip(), _split_list(r["cuisines"], ","), to_cents(r["average_cost"]), extra)
    if table == "attractions":
        return Attraction(r["name"].strip(), r["city"].strip(), extra)
    room = ROOM_TYPE_ALIASES.get(r["room_type"].strip().lower())
    if room is None:
        raise DomainError(f"unknown room_type {r['room_type']!r}")
    nights, occupancy = int(r["minimum_nights"]), int(r["maximum_occupancy"])
    if nights < 1 or occupancy < 1:
        raise DomainError("minimum_nights and maximum_occupancy must be >= 1")
    return Accommodation(
        r["name"].strip(),
        r["city"].strip(),
        to_cents(r["price"]),
        room,
        _split_list(r["house_rules"], "&"),
        nights,
        occupancy,
        extra,
    )


def read_table(table: str, path) -> tuple:
    required = COLUMNS[table]
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaMismatch(table, col, f"missing in {path}")
        extras = [h for h in header if h not in required]
        rows = []
        for r in reader:
            line_no = reader.line_num
            if None in r or any(r[c] is None for c in required):
                raise MalformedRecord(path, line_no, "wrong number of fields")
            try:
                row = _row(table, r, tuple((k, r[k]) for k in extras))
            except (DomainError, ValueError, KeyError) as exc:
                raise MalformedRecord(path, line_no, str(exc)) from None
            for money in ("price", "cost", "average_cost"):
                if getattr(row, money, 0) < 0:
                    raise MalformedRecord(path, line_no, f"negative {money}")
            rows.append(row)
    return tuple(rows)


def load_reference(directory) -> ReferenceBundle:
    directory = Path(directory)
    tables = {}
    for table in TABLES:
        path = directory / f"{table}.csv"
        tables[table] = read_table(table, path) if path.exists() else ()
    return ReferenceBundle(**tables)


def _cell(row, col: str) -> str:
    value = getattr(row, col)
    if col in ("price", "cost", "average_cost"):
        return format_money(value)[1:]
    if col == "cuisines":
        return ", ".join(value)
    if col == "house_rules":
        return " & ".join(value)
    return str(value)


def table_rows(bundle: ReferenceBundle, table: str) -> tuple:
    """Header and string rows of one table, required columns first."""
    rows = bundle.table(table)
    extras = bundle.extra_columns()[table]
    header = list(COLUMNS[table]) + extras
    out = []
    for row in rows:
        ex = dict(row.extra)
        out.append([_cell(row, c) for c in COLUMNS[table]] + [ex.get(c, "") for c in extras])
    return header, out


def write_reference(bundle: ReferenceBundle, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for table in TABLES:
        header, rows = table_rows(bundle, table)
        with open(directory / f"{table}.csv", "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            w.writerows(rows)


def render_reference(bundle: ReferenceBundle) -> str:
    """Canonical text form of a sandbox: empty tables are omitted entirely."""
    parts = []
    for table in TABLES:
        if not bundle.table(table):
            continue
        header, rows = table_rows(bundle, table)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
        parts.append(f"{table}:\n{buf.getvalue().rstrip()}")
    return "\n\n".join(parts)


def count_tokens(text: str) -> int:
    return len(text.split())


def token_length(bundle: ReferenceBundle) -> int:
    """Whitespace-token count of :func:`render_reference`; a length proxy, not a model tokenizer."""
    return count_tokens(render_reference(bundle))


# --- splits ----------------------------------------------------------------


def load_split(name: str, queries_path, reference_dir, plans_path=None) -> DatasetSplit:
    if name not in SPLITS:
        raise ValueError(f"unknown split {name!r}")
    if name != "train" and plans_path is not None:
        raise SchemaMismatch("plans", "plan_text", f"{name} split must not carry plans")
    plans: dict = {}
    if plans_path is not None:
        for line_no, obj in _read_jsonl(plans_path):
            if "query_id" not in obj or "plan_text" not in obj:
                raise MalformedRecord(plans_path, line_no, "plan record needs query_id and plan_text")
            plans[str(obj["query_id"])] = (line_no, obj["plan_text"])

    records = []
    reference_dir = Path(reference_dir)
    for line_no, obj in _read_jsonl(queries_path):
        try:
            query = query_from_json(obj)
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecord(queries_path, line_no, f"{type(exc).__name__}: {exc}") from None
        inline = obj.get("plan_text")
        if inline is not None and name != "train":
            raise SchemaMismatch("queries", "plan_text", f"{name} record {query.id} carries a plan")
        ref_path = reference_dir / query.id
        if not ref_path.is_dir():
            raise MissingReference(query.id)
        ref = load_reference(ref_path)
        plan = plan_text = None
        if name == "train":
            src = (queries_path, line_no, inline) if inline is not None else None
            if src is None and query.id in plans:
                src = (plans_path, *plans[query.id])
            if src is None:
                raise SchemaMismatch("plans", "plan_text", f"train record {query.id} has no plan")
            plan_text = src[2]
            plan, diag = parse_plan(plan_text, query.day_count)
            if plan is None:
                raise MalformedRecord(src[0], src[1], f"unparseable plan: {diag.fatal[1]}")
        records.append(SplitRecord(query, ref, plan, plan_text))
    return DatasetSplit(name, tuple(records))


def load_split_dir(name: str, directory) -> DatasetSplit:
    """Load a split laid out as described in the module docstring."""
    directory = Path(directory)
    plans = directory / "plans.jsonl"
    return load_split(
        name,
        directory / "queries.jsonl",
        directory / "reference",
        plans if name == "train" and plans.exists() else None,
    )


def write_split(split: DatasetSplit, directory) -> None:
    from .codec import render_plan

    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / "queries.jsonl", "w", encoding="utf-8") as fh:
        for r in split.records:
            fh.write(json.dumps(query_to_json(r.query)) + "\n")
    if split.name == "train":
        with open(directory / "plans.jsonl", "w", encoding="utf-8") as fh:
            for r in split.records:
                text = r.plan_text if r.plan_text is not None else render_plan(r.plan)
                fh.write(json.dumps({"query_id": r.query.id, "plan_text": text}) + "\n")
    for r in split.records:
        write_reference(r.reference, directory / "reference" / r.query.id)


def ensure_dir(path) -> Path:
    os.makedirs(path, exist_ok=True)
    return Path(path)
