"""Deterministic feedback generator: commonsense and hard constraint checks, trip cost.

Each commonsense check returns every violation it finds; their sentences are
joined into the single reason of that constraint's verdict.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Optional

from .domain import (
    ROOM_RULES,
    ConstraintId,
    Feedback,
    Plan,
    ReferenceBundle,
    TripQuery,
    Verdict,
    fold,
    format_money,
    render_feedback,  # noqa: F401  (re-exported)
)

ORACLE_VERSION = "1"

# reason phrasebook; also used by the random feedback variant
REASONS = {
    ConstraintId.REASONABLE_VISITING_CITY: (
        "The trip should be a closed circle.",
        "The city in day {day} is not connected to the previous day.",
        "The trip should visit {n} cities.",
    ),
    ConstraintId.VALID_RESTAURANTS: ("The restaurant in day {day} {slot} is repeated.",),
    ConstraintId.VALID_ATTRACTIONS: ("The attraction in day {day} is repeated.",),
    ConstraintId.VALID_ACCOMMODATION: ("The accommodation {name} do not obey the minumum nights rule.",),
    ConstraintId.VALID_TRANSPORTATION: ("The transportation is conflicting.",),
    ConstraintId.VALID_INFORMATION_IN_CURRENT_CITY: ("The {slot} in day {day} is invalid in the current city.",),
    ConstraintId.VALID_INFORMATION_IN_SANDBOX: ("The {slot} in day {day} is invalid in the sandbox.",),
    ConstraintId.NOT_ABSENT: ("No {slot} in day {day} is not allowed.",),
}


def _verdict(problems: list) -> Verdict:
    return Verdict.fail(" ".join(problems)) if problems else Verdict.success()


# --- commonsense -----------------------------------------------------------


def _check_route(plan: Plan, query: TripQuery) -> list:
    days = plan.days
    origin = fold(query.origin_city)
    problems = []
    if fold(days[0].start_city) != origin or fold(days[-1].end_city) != origin or not days[0].is_transition:
        problems.append("The trip should be a closed circle.")
    for prev, cur in zip(days, days[1:]):
        if fold(cur.start_city) != fold(prev.end_city):
            problems.append(f"The city in day {cur.day} is not connected to the previous day.")
    visited = {fold(c) for d in days for c in d.cities} - {origin}
    if len(visited) != query.city_count:
        problems.append(f"The trip should visit {query.city_count} cities.")
    return problems


def repeated_entities(plan: Plan) -> Counter:
    """Multiset of (kind, name, city) keys chosen more than once; order-free."""
    seen = Counter()
    for d in plan.days:
        for _, p in d.meals():
            if p is not None:
                seen[("restaurant", fold(p.name), fold(p.city))] += 1
        for a in d.attractions:
            seen[("attraction", fold(a.name), fold(a.city))] += 1
    return Counter({k: n - 1 for k, n in seen.items() if n > 1})


def _check_repeats(plan: Plan):
    restaurants, attractions = [], []
    seen_r, seen_a = set(), set()
    for d in plan.days:
        for slot, p in d.meals():
            if p is None:
                continue
            key = (fold(p.name), fold(p.city))
            if key in seen_r:
                restaurants.append(f"The restaurant in day {d.day} {slot} is repeated.")
            seen_r.add(key)
        for a in d.attractions:
            key = (fold(a.name), fold(a.city))
            if key in seen_a:
                attractions.append(f"The attraction in day {d.day} is repeated.")
            seen_a.add(key)
    return restaurants, attractions


def stay_runs(plan: Plan) -> list:
    """Consecutive nights at the same accommodation: ``[(place, first_day, nights)]``."""
    runs = []
    for d in plan.days:
        p = d.accommodation
        if p is None:
            continue
        key = (fold(p.name), fold(p.city))
        if runs and runs[-1][3] == key and runs[-1][1] + runs[-1][2] == d.day:
            place, first, nights, _ = runs[-1]
            runs[-1] = (place, first, nights + 1, key)
        else:
            runs.append((p, d.day, 1, key))
    return [r[:3] for r in runs]


def _check_min_nights(plan: Plan, ref: ReferenceBundle) -> list:
    problems = []
    for place, _, nights in stay_runs(plan):
        row = ref.find_accommodation(place.name, place.city)
        if row is not None and nights < row.minimum_nights:
            problems.append(
                f"The accommodation {place.name}, {place.city} do not obey the minumum nights rule."
            )
    return problems


def _check_transport_modes(plan: Plan) -> list:
    modes = {d.transport.mode for d in plan.days if d.transport is not None}
    if "self-driving" in modes and ({"flight", "taxi"} & modes):
        return ["The transportation is conflicting."]
    return []


def _day_slots(d):
    """(slot name, place) pairs for the day's sited entities, in feedback order."""
    for slot, p in d.meals():
        if p is not None:
            yield slot, p
    for a in d.attractions:
        yield "attraction", a
    if d.accommodation is not None:
        yield "accommodation", d.accommodation


def _check_current_city(plan: Plan) -> list:
    problems = []
    for d in plan.days:
        cities = {fold(c) for c in d.cities}
        leg = d.transport
        if leg is not None and leg.mode != "unknown":
            if fold(leg.from_city) not in cities or fold(leg.to_city) not in cities:
                problems.append(f"The transportation in day {d.day} is invalid in the current city.")
        reported = set()
        for slot, p in _day_slots(d):
            if fold(p.city) not in cities and slot not in reported:
                reported.add(slot)
                problems.append(f"The {slot} in day {d.day} is invalid in the current city.")
    return problems


def unresolved_entities(plan: Plan, ref: ReferenceBundle) -> list:
    """``(day, slot)`` of every plan entity missing from the sandbox."""
    missing = []
    for d in plan.days:
        leg = d.transport
        if leg is not None:
            if leg.mode == "flight":
                ok = ref.find_flight(leg.flight_number, leg.from_city, leg.to_city) is not None
                slot = "flight"
            elif leg.mode in ("self-driving", "taxi"):
                ok = ref.find_route(leg.mode, leg.from_city, leg.to_city) is not None
                slot = leg.mode
            else:
                ok, slot = False, "transportation"
            if not ok:
                missing.append((d.day, slot))
        for slot, p in d.meals():
            if p is not None and ref.find_restaurant(p.name, p.city) is None:
                missing.append((d.day, slot))
        for a in d.attractions:
            if ref.find_attraction(a.name, a.city) is None:
                missing.append((d.day, "attraction"))
        a = d.accommodation
        if a is not None and ref.find_accommodation(a.name, a.city) is None:
            missing.append((d.day, "accommodation"))
    return missing


def _check_sandbox(plan: Plan, ref: ReferenceBundle) -> list:
    out = []
    for day, slot in unresolved_entities(plan, ref):
        msg = f"The {slot} in day {day} is invalid in the sandbox."
        if msg not in out:
            out.append(msg)
    return out


def _check_absent(plan: Plan) -> list:
    problems = []
    last = plan.days[-1].day
    for d in plan.days:
        if d.is_transition and d.transport is None:
            problems.append(f"No transportation in day {d.day} is not allowed.")
        if not d.is_transition:
            if any(p is None for _, p in d.meals()):
                problems.append(f"No meal in day {d.day} is not allowed.")
            if not d.attractions:
                problems.append(f"No attraction in day {d.day} is not allowed.")
        if d.day != last and d.accommodation is None:
            problems.append(f"No accommodation in day {d.day} is not allowed.")
    return problems


def check_commonsense(plan: Plan, query: TripQuery, ref: ReferenceBundle) -> Feedback:
    restaurants, attractions = _check_repeats(plan)
    return Feedback.from_map(
        {
            ConstraintId.REASONABLE_VISITING_CITY: _verdict(_check_route(plan, query)),
            ConstraintId.VALID_RESTAURANTS: _verdict(restaurants),
            ConstraintId.VALID_ATTRACTIONS: _verdict(attractions),
            ConstraintId.VALID_ACCOMMODATION: _verdict(_check_min_nights(plan, ref)),
            ConstraintId.VALID_TRANSPORTATION: _verdict(_check_transport_modes(plan)),
            ConstraintId.VALID_INFORMATION_IN_CURRENT_CITY: _verdict(_check_current_city(plan)),
            ConstraintId.VALID_INFORMATION_IN_SANDBOX: _verdict(_check_sandbox(plan, ref)),
            ConstraintId.NOT_ABSENT: _verdict(_check_absent(plan)),
        }
    )


# --- cost ------------------------------------------------------------------


class UnresolvedEntity(LookupError):
    def __init__(self, day, slot, name):
        self.day, self.slot, self.name = day, slot, name
        super().__init__(f"day {day} {slot}: {name!r} not in the sandbox")


@dataclass(frozen=True)
class LineItem:
    day: int
    slot: str
    unit_price: int
    multiplier: int

    @property
    def subtotal(self) -> int:
        return self.unit_price * self.multiplier


@dataclass(frozen=True)
class CostBreakdown:
    transport_total: int
    meals_total: int
    lodging_total: int
    line_items: tuple = ()

    @property
    def grand_total(self) -> int:
        return self.transport_total + self.meals_total + self.lodging_total


def compute_cost(plan: Plan, query: TripQuery, ref: ReferenceBundle) -> CostBreakdown:
    """Trip cost in cents.

    Flights and meals are per person; a ground route is paid once per leg at
    its listed cost; lodging is per room per night with
    ``rooms = ceil(group_size / maximum_occupancy)``.
    """
    group = query.group_size
    items = []
    totals = Counter()
    for d in plan.days:
        leg = d.transport
        if leg is not None:
            if leg.mode == "flight":
                f = ref.find_flight(leg.flight_number, leg.from_city, leg.to_city)
                if f is None:
                    raise UnresolvedEntity(d.day, "flight", leg.flight_number)
                items.append(("transport", LineItem(d.day, "flight", f.price, group)))
            elif leg.mode in ("self-driving", "taxi"):
                r = ref.find_route(leg.mode, leg.from_city, leg.to_city)
                if r is None:
                    raise UnresolvedEntity(d.day, leg.mode, f"{leg.from_city} -> {leg.to_city}")
                items.append(("transport", LineItem(d.day, leg.mode, r.cost, 1)))
            else:
                raise UnresolvedEntity(d.day, "transportation", leg.raw or "")
        for slot, p in d.meals():
            if p is None:
                continue
            r = ref.find_restaurant(p.name, p.city)
            if r is None:
                raise UnresolvedEntity(d.day, slot, p.name)
            items.append(("meals", LineItem(d.day, slot, r.average_cost, group)))
        a = d.accommodation
        if a is not None:
            row = ref.find_accommodation(a.name, a.city)
            if row is None:
                raise UnresolvedEntity(d.day, "accommodation", a.name)
            rooms = math.ceil(group / row.maximum_occupancy)
            items.append(("lodging", LineItem(d.day, "accommodation", row.price, rooms)))
    for bucket, item in items:
        totals[bucket] += item.subtotal
    return CostBreakdown(
        totals["transport"], totals["meals"], totals["lodging"], tuple(i for _, i in items)
    )


# --- hard constraints ------------------------------------------------------


@dataclass(frozen=True)
class HardVerdicts:
    budget: Verdict
    room_rule: Optional[Verdict] = None
    room_type: Optional[Verdict] = None
    cuisine: Optional[Verdict] = None
    transportation: Optional[Verdict] = None

    FIELDS = ("room_rule", "room_type", "cuisine", "budget", "transportation")

    def applicable(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS if getattr(self, k) is not None}

    @property
    def all_pass(self) -> bool:
        return all(v.ok for v in self.applicable().values())


def check_hard(plan: Plan, query: TripQuery, ref: ReferenceBundle) -> HardVerdicts:
    hc = query.hard_constraints
    out: dict = {}
    stays = [d.accommodation for d in plan.days if d.accommodation is not None]
    rows = [(p, ref.find_accommodation(p.name, p.city)) for p in stays]

    if hc.room_rule is not None:
        bad = sorted({p.name for p, row in rows if row is None or not row.allows(hc.room_rule)})
        rule = ROOM_RULES[hc.room_rule]
        out["room_rule"] = _verdict([f"The house rule '{rule}' is violated by {n}." for n in bad])
    if hc.room_type is not None:
        bad = sorted({p.name for p, row in rows if row is None or not row.has_room_type(hc.room_type)})
        out["room_type"] = _verdict([f"The room type of {n} is not {hc.room_type}." for n in bad])
    if hc.cuisines:
        served = set()
        for d in plan.days:
            for _, p in d.meals():
                if p is None:
                    continue
                r = ref.find_restaurant(p.name, p.city)
                if r is not None:
                    served.update(fold(c) for c in r.cuisines)
        missing = [c for c in sorted(hc.cuisines) if fold(c) not in served]
        out["cuisine"] = _verdict([f"The cuisine {c} is not satisfied." for c in missing])
    if hc.transportation is not None:
        forbidden = "flight" if hc.transportation == "no-flight" else "self-driving"
        used = any(d.transport is not None and d.transport.mode == forbidden for d in plan.days)
        out["transportation"] = _verdict([f"The transportation {forbidden} is not allowed."] if used else [])
    try:
        total = compute_cost(plan, query, ref).grand_total
    except UnresolvedEntity as exc:
        out["budget"] = Verdict.fail(f"The cost cannot be computed: {exc}.")
    else:
        over = total > query.budget
        msg = f"The total cost {format_money(total)} exceeds the budget {format_money(query.budget)}."
        out["budget"] = _verdict([msg] if over else [])
    return HardVerdicts(**out)


# --- export ----------------------------------------------------------------


@dataclass
class OracleResult:
    commonsense: Feedback
    hard: Optional[HardVerdicts] = None
    extras: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "oracle_version": ORACLE_VERSION,
            "commonsense": {
                c.label: {"ok": v.ok, "reason": v.reason} for c, v in self.commonsense.items()
            },
            "hard": None,
        }
        if self.hard is not None:
            out["hard"] = {k: {"ok": v.ok, "reason": v.reason} for k, v in self.hard.applicable().items()}
        return out


def check(plan: Plan, query: TripQuery, ref: ReferenceBundle, gate: bool = True) -> OracleResult:
    """Commonsense verdicts, then hard verdicts (only when commonsense all pass, if ``gate``)."""
    fb = check_commonsense(plan, query, ref)
    hard = check_hard(plan, query, ref) if (fb.all_success or not gate) else None
    return OracleResult(fb, hard)
