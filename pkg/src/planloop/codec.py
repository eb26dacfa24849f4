"""Day-by-day plan text <-> :class:`~planloop.domain.Plan`.

Input is read leniently (ragged whitespace, trailing periods, any label case);
output is always the one canonical layout::

    Day 1:
    Current City: from Seattle to San Francisco
    Transportation: Self-Driving from Seattle to San Francisco, Duration: 12 hours 28 mins, Cost: $65
    Breakfast: -
    Attraction: -
    Lunch: -
    Dinner: Anupam Eating Point, San Francisco
    Accommodation: Room in Down town Brooklyn Parkslop, San Francisco

Days are separated by a blank line. See ``docs/plan_grammar.md``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Optional

from .domain import (
    DayEntry,
    DomainError,
    Place,
    Plan,
    Transition,
    TransportLeg,
    format_money,
    to_cents,
)

LABELS = (
    "Current City",
    "Transportation",
    "Breakfast",
    "Attraction",
    "Lunch",
    "Dinner",
    "Accommodation",
)
_SLOT = {label.lower(): label.lower().replace(" ", "_") for label in LABELS}

_DAY = re.compile(r"^\s*\**\s*day\s+(\d+)\s*\**\s*:?\s*\**\s*$", re.IGNORECASE)
_LABEL = re.compile(
    r"^\s*\**\s*(current city|transportation|breakfast|attraction|lunch|dinner|accommodation)\s*\**\s*:\s*(.*)$",
    re.IGNORECASE,
)
_FROM_TO = re.compile(r"^from\s+(.+?)\s+to\s+(.+?)$", re.IGNORECASE)
_FLIGHT = re.compile(r"flight\s+number\s*:\s*([A-Za-z]\d+)", re.IGNORECASE)
_GROUND = re.compile(r"^(self[-\s]?driving|taxi)\b", re.IGNORECASE)
_FIELD = re.compile(r"(departure time|arrival time|duration|cost)\s*:\s*([^,]*)", re.IGNORECASE)
_LEG_FROM_TO = re.compile(r"from\s+(.+?)\s+to\s+(.+?)(?:,|$)", re.IGNORECASE)


@dataclass
class ParseDiagnostics:
    warnings: list = field(default_factory=list)  # (day, slot, message)
    fatal: Optional[tuple] = None  # (line_no, cause)

    @property
    def ok(self) -> bool:
        return self.fatal is None

    def warn(self, day, slot, message):
        self.warnings.append((day, slot, message))

    def to_json(self) -> dict:
        return {
            "warnings": [list(w) for w in self.warnings],
            "fatal": list(self.fatal) if self.fatal else None,
        }


def _is_dash(value: str) -> bool:
    return value.strip().rstrip(".").strip() in ("-", "")


def _place(value: str) -> Optional[Place]:
    value = value.strip()
    if _is_dash(value):
        return None
    if value.endswith(".") and "," in value:
        value = value[:-1].rstrip()
    if "," in value:
        name, city = value.rsplit(",", 1)
        return Place(name.strip(), city.strip())
    return Place(value)


def _attractions(value: str) -> tuple:
    if _is_dash(value):
        return ()
    items = [item for item in value.split(";") if item.strip().rstrip(".").strip()]
    return tuple(p for p in (_place(item) for item in items) if p is not None)


def _current_city(value: str):
    value = value.strip().rstrip(".").strip()
    m = _FROM_TO.match(value)
    if m:
        return Transition(m[1].strip(), m[2].strip())
    return value


def _transport(value: str, diag: ParseDiagnostics, day: int) -> Optional[TransportLeg]:
    value = value.strip()
    if _is_dash(value):
        return None
    fields = {k.lower(): v.strip() for k, v in _FIELD.findall(value)}
    route = _LEG_FROM_TO.search(value)
    src, dst = (route[1].strip(), route[2].strip()) if route else ("", "")
    cost = None
    if fields.get("cost"):
        try:
            cost = to_cents(fields["cost"])
        except DomainError:
            diag.warn(day, "transportation", f"unreadable cost {fields['cost']!r}")
    flight = _FLIGHT.search(value)
    if flight:
        return TransportLeg(
            "flight",
            src,
            dst,
            flight_number=flight[1].upper(),
            departure_time=fields.get("departure time") or None,
            arrival_time=fields.get("arrival time") or None,
            duration=fields.get("duration") or None,
            cost=cost,
        )
    ground = _GROUND.match(value)
    if ground:
        mode = "taxi" if ground[1].lower() == "taxi" else "self-driving"
        return TransportLeg(mode, src, dst, duration=fields.get("duration") or None, cost=cost)
    diag.warn(day, "transportation", "unrecognized transport mode")
    return TransportLeg("unknown", src, dst, raw=value)


def parse_plan(text: str, expected_days: int):
    """Parse plan text.

    Returns ``(plan, diagnostics)``; ``plan`` is ``None`` exactly when
    ``diagnostics.fatal`` is set (missing, duplicated or out-of-order day
    block, missing Current City, wrong day count). Never raises on str input.
    """
    if expected_days < 1:
        raise ValueError("expected_days must be >= 1")
    diag = ParseDiagnostics()
    blocks: list = []  # (day_no, header_line, {slot: (line_no, value)})
    current = None
    for line_no, line in enumerate(text.splitlines(), 1):
        m = _DAY.match(line)
        if m:
            current = (int(m[1]), line_no, {})
            blocks.append(current)
            continue
        if current is None:
            continue
        m = _LABEL.match(line)
        if m:
            slot = _SLOT[m[1].lower()]
            if slot in current[2]:
                diag.warn(current[0], slot, "duplicate label, keeping the first")
            else:
                current[2][slot] = (line_no, m[2])
        elif line.strip():
            diag.warn(current[0], None, f"ignored line {line_no}")

    if not blocks:
        diag.fatal = (1, "no day blocks found")
        return None, diag
    days = []
    for position, (day_no, line_no, slots) in enumerate(blocks, 1):
        if day_no != position:
            seen = {b[0] for b in blocks[: position - 1]}
            cause = f"duplicate day {day_no}" if day_no in seen else f"missing day {position}"
            diag.fatal = (line_no, cause)
            return None, diag
        if "current_city" not in slots or _is_dash(slots["current_city"][1]):
            diag.fatal = (line_no, f"day {day_no} has no Current City")
            return None, diag
        for label in LABELS[1:]:
            if label.lower() not in slots:
                diag.warn(day_no, label.lower(), "label missing, treated as '-'")
        get = lambda s: slots.get(s, (0, "-"))[1]  # noqa: E731
        days.append(
            DayEntry(
                day=day_no,
                current_city=_current_city(get("current_city")),
                transport=_transport(get("transportation"), diag, day_no),
                breakfast=_place(get("breakfast")),
                attractions=_attractions(get("attraction")),
                lunch=_place(get("lunch")),
                dinner=_place(get("dinner")),
                accommodation=_place(get("accommodation")),
            )
        )
    if len(days) != expected_days:
        line_no = blocks[-1][1] if len(days) > expected_days else len(text.splitlines())
        cause = (
            f"missing day {len(days) + 1}" if len(days) < expected_days else f"unexpected day {expected_days + 1}"
        )
        diag.fatal = (line_no, cause)
        return None, diag
    return Plan(tuple(days)), diag


# --- rendering -------------------------------------------------------------


def _render_place(p: Optional[Place]) -> str:
    if p is None:
        return "-"
    return f"{p.name}, {p.city}" if p.city else p.name


def render_transport(leg: Optional[TransportLeg]) -> str:
    if leg is None:
        return "-"
    if leg.mode == "unknown":
        return leg.raw or "-"
    if leg.mode == "flight":
        parts = [f"Flight Number: {leg.flight_number}", f"from {leg.from_city} to {leg.to_city}"]
        if leg.departure_time:
            parts.append(f"Departure Time: {leg.departure_time}")
        if leg.arrival_time:
            parts.append(f"Arrival Time: {leg.arrival_time}")
        if leg.duration:
            parts.append(f"Duration: {leg.duration}")
    else:
        head = "Self-Driving" if leg.mode == "self-driving" else "Taxi"
        parts = [f"{head} from {leg.from_city} to {leg.to_city}"]
        if leg.duration:
            parts.append(f"Duration: {leg.duration}")
    if leg.cost is not None:
        parts.append(f"Cost: {format_money(leg.cost)}")
    return ", ".join(parts)


def render_day(d: DayEntry) -> str:
    city = d.current_city
    city_text = f"from {city.from_city} to {city.to_city}" if isinstance(city, Transition) else city
    attractions = "; ".join(_render_place(a) for a in d.attractions) if d.attractions else "-"
    return "\n".join(
        [
            f"Day {d.day}:",
            f"Current City: {city_text}",
            f"Transportation: {render_transport(d.transport)}",
            f"Breakfast: {_render_place(d.breakfast)}",
            f"Attraction: {attractions}",
            f"Lunch: {_render_place(d.lunch)}",
            f"Dinner: {_render_place(d.dinner)}",
            f"Accommodation: {_render_place(d.accommodation)}",
        ]
    )


def render_plan(plan: Plan) -> str:
    return "\n\n".join(render_day(d) for d in plan.days)
