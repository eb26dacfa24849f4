"""Context cleaning: infer hard constraints from a query, then drop reference
rows no compliant plan could use and prune auxiliary columns."""

from __future__ import annotations

import ast
import json
import logging
import re
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

from .domain import (
    CUISINES,
    ROOM_RULES,
    ROOM_TYPES,
    TABLES,
    TRANSPORT_RULES,
    DomainError,
    HardConstraintSet,
    ReferenceBundle,
    to_cents,
)
from .ingest import token_length

log = logging.getLogger(__name__)


class AmbiguousBudget(ValueError):
    pass


# --- rule-based extraction -------------------------------------------------

_NEG = r"(?:not|n't|never|avoid|avoiding|no|without|skip)"
_ROOM_RULE_PATTERNS = (
    ("pets-allowed", re.compile(r"\bpets?\b|pet-friendly", re.I)),
    (
        "parties-allowed",
        re.compile(
            r"\b(?:allow|allows|allowing|permit|permits|host|hosting|throw|have)\s+(?:\w+\s+)?part(?:y|ies)\b"
            r"|\bpart(?:y|ies)[- ](?:friendly|allowed)\b",
            re.I,
        ),
    ),
    ("smoking-allowed", re.compile(r"\bsmok(?:e|es|ing)\b", re.I)),
    ("children-allowed", re.compile(r"\bchildren\b|\bkids\b|\btoddlers?\b", re.I)),
    ("visitors-allowed", re.compile(r"\bvisitors?\b|\bguests? (?:over|to visit)\b", re.I)),
)
_ROOM_TYPE_PATTERNS = (
    ("not-shared-room", re.compile(rf"\b{_NEG}\b[^.]{{0,30}}\bshared rooms?\b|\bnot[- ]shared rooms?\b", re.I)),
    ("entire-room", re.compile(r"\bentire (?:rooms?|homes?|apartments?|places?)\b", re.I)),
    ("private-room", re.compile(r"\bprivate rooms?\b", re.I)),
    ("shared-room", re.compile(r"\bshared rooms?\b", re.I)),
)
_NO_FLIGHT = re.compile(rf"\b{_NEG}\b[^.]{{0,40}}\b(?:fly|flying|flights?|planes?|air travel)\b", re.I)
_NO_DRIVE = re.compile(
    rf"\b{_NEG}\b[^.]{{0,40}}\b(?:drive|driving|self-driving|self-drive)\b", re.I
)
_MONEY = re.compile(r"\$\s?(\d[\d,]*(?:\.\d+)?)")
_CUISINE = re.compile(r"\b(" + "|".join(CUISINES) + r")\b", re.I)


def cuisines_in_order(text: str) -> list:
    """Cuisine names in order of first mention."""
    out = []
    for m in _CUISINE.finditer(text):
        name = next(c for c in CUISINES if c.lower() == m[1].lower())
        if name not in out:
            out.append(name)
    return out


def format_cuisine_answer(cuisines: Sequence[str]) -> str:
    return "[" + ", ".join(f"'{c}'" for c in cuisines) + "]"


def extract_budget(text: str) -> Optional[int]:
    amounts = list(_MONEY.finditer(text))
    if not amounts:
        return None
    if len(amounts) == 1:
        return to_cents(amounts[0][1])
    near = [
        m
        for m in amounts
        if re.search(r"budget", text[max(0, m.start() - 40) : m.end() + 25], re.I)
    ]
    if not near:
        raise AmbiguousBudget(f"{len(amounts)} dollar amounts, none next to 'budget'")
    return to_cents(near[0][1])


def _first(patterns, text):
    hits = [(m.start(), value) for value, pat in patterns for m in [pat.search(text)] if m]
    return min(hits)[1] if hits else None


def extract_constraints_rules(query_text: str) -> HardConstraintSet:
    """Keyword/pattern extraction of the five hard constraints."""
    transportation = None
    if _NO_FLIGHT.search(query_text):
        transportation = "no-flight"
    elif _NO_DRIVE.search(query_text):
        transportation = "no-self-driving"
    return HardConstraintSet(
        room_rule=_first(_ROOM_RULE_PATTERNS, query_text),
        room_type=next((v for v, p in _ROOM_TYPE_PATTERNS if p.search(query_text)), None),
        cuisines=frozenset(cuisines_in_order(query_text)),
        budget=extract_budget(query_text),
        transportation=transportation,
    )


# --- model-backed extraction -----------------------------------------------

ANSWER_MARK = "===>"


def build_scrubber_prompt(query_text: str, shots: Iterable) -> "PromptBundle":
    """Cuisine-inference prompt: every shot is ``(shot_id, query_text, cuisine_list)``."""
    from .gateway.prompts import PromptBundle

    shots = list(shots)
    parts = [f"{text}\n{ANSWER_MARK} {format_cuisine_answer(c)}" for _, text, c in shots]
    parts.append(f"{query_text}\n{ANSWER_MARK}")
    return PromptBundle("scrubber", "\n\n".join(parts), len(shots), tuple(s[0] for s in shots))


def scrubber_shots_from(records) -> list:
    return [(r.query.id, r.query.text, cuisines_in_order(r.query.text)) for r in records]


def parse_scrubber_reply(reply: str, query_text: str) -> Optional[HardConstraintSet]:
    """Bracketed cuisine list (other fields from the rules) or a JSON object; None if unreadable."""
    text = reply.strip()
    if text.startswith("{"):
        try:
            obj = json.loads(text)
            budget = obj.get("budget")
            return HardConstraintSet(
                room_rule=obj.get("room_rule"),
                room_type=obj.get("room_type"),
                cuisines=frozenset(obj.get("cuisines") or ()),
                budget=to_cents(budget) if budget is not None else None,
                transportation=obj.get("transportation"),
            )
        except (ValueError, TypeError, AttributeError, DomainError):
            return None
    m = re.search(r"\[[^\[\]]*\]", text)
    if not m:
        return None
    try:
        names = ast.literal_eval(m[0])
    except (ValueError, SyntaxError):
        return None
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        return None
    canon = {c.lower(): c for c in CUISINES}
    if any(n.strip().lower() not in canon for n in names):
        return None
    try:
        rules = extract_constraints_rules(query_text)
    except AmbiguousBudget:
        rules = HardConstraintSet()
    return replace(rules, cuisines=frozenset(canon[n.strip().lower()] for n in names))


def extract_constraints_llm(query_text: str, backend, shots: Iterable = ()):
    """Ask a model for the cuisine list; fall back to the rules on an unreadable reply.

    Returns ``(constraints, used_fallback)``. Backend errors propagate with
    the prompt attached as ``exc.prompt``.
    """
    from .gateway.backends import BackendError, complete

    prompt = build_scrubber_prompt(query_text, shots)
    try:
        reply = complete(backend, prompt)
    except BackendError as exc:
        exc.prompt = prompt.text
        raise
    parsed = parse_scrubber_reply(reply, query_text)
    if parsed is not None:
        return parsed, False
    log.warning("unreadable scrubber reply, using rule-based extraction")
    return extract_constraints_rules(query_text), True


# --- scrubbing -------------------------------------------------------------


@dataclass(frozen=True)
class ScrubReport:
    tokens_before: int
    tokens_after: int
    rows_dropped: dict = field(default_factory=dict)
    columns_dropped: dict = field(default_factory=dict)

    @property
    def reduction_ratio(self) -> float:
        if self.tokens_before == 0:
            return 0.0
        return 1 - self.tokens_after / self.tokens_before

    def to_json(self) -> dict:
        return {
            "tokens_before": self.tokens_before,
            "tokens_after": self.tokens_after,
            "reduction_ratio": round(self.reduction_ratio, 4),
            "rows_dropped": dict(self.rows_dropped),
            "columns_dropped": {k: list(v) for k, v in self.columns_dropped.items()},
        }


def _keep_accommodation(row, c: HardConstraintSet) -> bool:
    if c.room_rule is not None and not row.allows(c.room_rule):
        return False
    if c.room_type is not None and not row.has_room_type(c.room_type):
        return False
    # a single night above the whole budget can never fit
    if c.budget is not None and row.price > c.budget:
        return False
    return True


def scrub(ref: ReferenceBundle, c: HardConstraintSet, drop_columns: Optional[Iterable[str]] = None):
    """Return ``(scrubbed_bundle, report)``.

    ``drop_columns=None`` drops every auxiliary column; otherwise only the
    named ones.
    """
    tables = {t: ref.table(t) for t in TABLES}
    if c.cuisines:
        wanted = {x.lower() for x in c.cuisines}
        tables["restaurants"] = tuple(
            r for r in tables["restaurants"] if wanted & {x.lower() for x in r.cuisines}
        )
    tables["accommodations"] = tuple(r for r in tables["accommodations"] if _keep_accommodation(r, c))
    if c.transportation is not None:
        mode = TRANSPORT_RULES[c.transportation]
        if mode == "flight":
            tables["flights"] = ()
        else:
            tables["ground_routes"] = tuple(r for r in tables["ground_routes"] if r.mode != mode)

    before_cols = ref.extra_columns()
    drop = None if drop_columns is None else set(drop_columns)
    columns_dropped = {}
    for t in TABLES:
        gone = [col for col in before_cols[t] if drop is None or col in drop]
        if gone:
            columns_dropped[t] = gone
            tables[t] = tuple(
                replace(row, extra=tuple((k, v) for k, v in row.extra if k not in gone))
                for row in tables[t]
            )
    out = ReferenceBundle(**tables)
    rows_dropped = {t: len(ref.table(t)) - len(out.table(t)) for t in TABLES}
    report = ScrubReport(token_length(ref), token_length(out), rows_dropped, columns_dropped)
    return out, report


__all__ = [
    "ROOM_RULES",
    "ROOM_TYPES",
    "AmbiguousBudget",
    "ScrubReport",
    "build_scrubber_prompt",
    "cuisines_in_order",
    "extract_constraints_llm",
    "extract_constraints_rules",
    "format_cuisine_answer",
    "parse_scrubber_reply",
    "scrub",
]
