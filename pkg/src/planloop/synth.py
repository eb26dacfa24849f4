"""Seeded generator of small, realistic trip queries with sandboxes and a compliant plan.

Used for the bundled fixtures, property tests and offline experiment runs.
Every generated plan passes all commonsense and hard constraints against its
sandbox, and only uses restaurants serving a queried cuisine (when any are
queried), so it also survives scrubbing.
"""

from __future__ import annotations

import datetime as dt
import math
import random
from dataclasses import replace
from typing import Optional

from .domain import (
    CUISINES,
    ROOM_RULES,
    Accommodation,
    Attraction,
    DayEntry,
    Flight,
    GroundRoute,
    HardConstraintSet,
    Place,
    Plan,
    ReferenceBundle,
    Restaurant,
    Transition,
    TransportLeg,
    TripQuery,
)
from .ingest import SplitRecord
from .oracle import compute_cost

REGIONS = {
    "California": ["San Francisco", "Los Angeles", "San Diego", "Sacramento", "San Jose", "Fresno"],
    "Texas": ["Austin", "Houston", "Dallas", "San Antonio", "El Paso", "Lubbock"],
    "Colorado": ["Denver", "Boulder", "Colorado Springs", "Aspen", "Durango", "Pueblo"],
    "Florida": ["Miami", "Orlando", "Tampa", "Jacksonville", "Tallahassee", "Pensacola"],
    "New York": ["New York", "Buffalo", "Rochester", "Albany", "Syracuse", "Ithaca"],
    "Washington": ["Spokane", "Tacoma", "Bellingham", "Olympia", "Yakima", "Walla Walla"],
}
ORIGINS = ["Seattle", "Chicago", "Boston", "Atlanta", "Phoenix", "Indianapolis", "Honolulu", "Charlotte", "Nashville", "Detroit"]

_ADJ = ["Golden", "Blue", "Rustic", "Little", "Olive", "Silver", "Spice", "Harbor", "Maple", "Urban", "Copper", "Velvet", "Saffron", "Cedar", "Lucky", "Royal"]
_NOUN = ["Spoon", "Table", "Kitchen", "Bistro", "Grill", "Garden", "Tavern", "Cafe", "House", "Diner", "Oven", "Corner", "Plate", "Lantern", "Courtyard", "Pantry"]
_SIGHT = ["Museum of History", "Botanical Garden", "Art Museum", "Science Center", "Riverside Park", "Old Town Square", "Observatory", "Zoo", "Aquarium", "Memorial Park", "Heritage Village", "Sculpture Park"]
_STAY = ["Cozy Loft", "Sunny Studio", "Quiet Room near Downtown", "Spacious Family Home", "Charming Cottage", "Modern Apartment", "Garden Suite", "Bright Room with View", "Historic Townhouse", "Budget Room"]
_STREETS = ["Main St", "Oak Ave", "Pine Rd", "Elm Street", "Lake Blvd", "Hill Road", "Park Lane", "Market Street"]
_DESCRIPTIONS = [
    "A well known local favourite with friendly staff and generous portions",
    "Popular with families and visitors looking for a relaxed afternoon",
    "Recently renovated space close to public transport and shopping",
    "Highly recommended by guides for its atmosphere and reasonable prices",
]

_RULE_PHRASES = {
    "pets-allowed": "We will be traveling with pets, so pet-friendly accommodations are a must.",
    "parties-allowed": "Our accommodations should allow parties.",
    "smoking-allowed": "Some of us smoke, so accommodations must permit smoking.",
    "children-allowed": "We are traveling with children under 10, so lodgings must welcome them.",
    "visitors-allowed": "We would like to have visitors over at our accommodations.",
}
_TYPE_PHRASES = {
    "entire-room": "We would like to stay in entire rooms.",
    "private-room": "We would prefer private rooms for our stay.",
    "shared-room": "A shared room is fine for us.",
    "not-shared-room": "We do not want a shared room.",
}
_TRANSPORT_PHRASES = {
    "no-flight": "We do not plan to travel by flight.",
    "no-self-driving": "We do not plan to drive ourselves around.",
}


def _phone(rng):
    return f"({rng.randint(200, 989)}) {rng.randint(200, 989)}-{rng.randint(1000, 9999)}"


def _address(rng, city):
    return f"{rng.randint(10, 9999)} {rng.choice(_STREETS)}, {city}"


def _site(name):
    return "https://www." + "".join(ch for ch in name.lower() if ch.isalnum())[:24] + ".example.com"


def _names(rng, pool_a, pool_b, k):
    combos = [f"{a} {b}" for a in pool_a for b in pool_b]
    return rng.sample(combos, k)


def _route(origin, cities):
    """City per day, as (start, end) pairs, for a 2-nights-per-city loop."""
    days = []
    stops = [origin] + list(cities) + [origin]
    for i, city in enumerate(cities):
        days.append((stops[i], city))
        days.append((city, city))
    days.append((cities[-1], origin))
    return days


def generate(seed: int, index: int = 0, day_count: Optional[int] = None) -> SplitRecord:
    rng = random.Random(f"synth:{seed}:{index}")
    day_count = day_count or rng.choice([3, 5, 7])
    city_count = {3: 1, 5: 2, 7: 3}[day_count]
    region = rng.choice(sorted(REGIONS))
    cities = rng.sample(REGIONS[region], city_count)
    origin = rng.choice(ORIGINS)
    group = rng.randint(1, 6)

    hc_cuisines = frozenset(rng.sample(CUISINES, rng.choice([0, 0, 1, 2, 3, 4])))
    room_rule = rng.choice([None, None, *ROOM_RULES])
    room_type = rng.choice([None, None, "entire-room", "private-room", "not-shared-room"])
    transportation = rng.choice([None, None, "no-flight", "no-self-driving"])
    if transportation == "no-flight":
        modes = rng.choice([["self-driving"], ["taxi"]])
    elif transportation == "no-self-driving":
        modes = rng.choice([["flight"], ["taxi"], ["flight", "taxi"]])
    else:
        modes = rng.choice([["flight"], ["self-driving"], ["taxi"], ["flight", "taxi"]])

    restaurants, attractions, stays = [], [], []
    for city in cities:
        for i, name in enumerate(_names(rng, _ADJ, _NOUN, 14)):
            if hc_cuisines and i < 9:
                cz = {rng.choice(sorted(hc_cuisines))} | set(rng.sample(CUISINES, rng.randint(0, 2)))
            elif hc_cuisines:
                others = [c for c in CUISINES if c not in hc_cuisines] or list(CUISINES)
                cz = set(rng.sample(others, min(len(others), rng.randint(1, 2))))
            else:
                cz = set(rng.sample(CUISINES, rng.randint(1, 3)))
            if hc_cuisines and i < len(hc_cuisines):
                cz.add(sorted(hc_cuisines)[i])
            restaurants.append(
                Restaurant(
                    name,
                    city,
                    tuple(c for c in CUISINES if c in cz),
                    rng.randint(10, 80) * 100,
                    (
                        ("aggregate_rating", f"{rng.uniform(2.5, 5):.1f}"),
                        ("phone", _phone(rng)),
                        ("website", _site(name)),
                        ("address", _address(rng, city)),
                        ("description", rng.choice(_DESCRIPTIONS)),
                    ),
                )
            )
        for name in rng.sample(_SIGHT, 8):
            full = f"{city} {name}"
            attractions.append(
                Attraction(
                    full,
                    city,
                    (
                        ("latitude", f"{rng.uniform(25, 48):.4f}"),
                        ("longitude", f"{rng.uniform(-122, -71):.4f}"),
                        ("address", _address(rng, city)),
                        ("phone", _phone(rng)),
                        ("website", _site(full)),
                        ("description", rng.choice(_DESCRIPTIONS)),
                    ),
                )
            )
        for i, name in enumerate(rng.sample(_STAY, 7)):
            compliant = i < 3
            rtype = rng.choice(["entire-room", "private-room", "shared-room"])
            rules = set(rng.sample(sorted(ROOM_RULES.values()), rng.randint(0, 2)))
            if compliant:
                if room_type in ("entire-room", "private-room"):
                    rtype = room_type
                elif room_type == "not-shared-room" and rtype == "shared-room":
                    rtype = "entire-room"
                if room_rule is not None:
                    rules.discard(ROOM_RULES[room_rule])
            stays.append(
                Accommodation(
                    f"{name} in {city}",
                    city,
                    rng.randint(60, 400) * 100,
                    rtype,
                    tuple(sorted(rules)),
                    rng.randint(1, 2) if compliant else rng.randint(1, 5),
                    rng.randint(2, 8) if compliant else rng.randint(1, 8),
                    (
                        ("review_rate", f"{rng.uniform(2, 5):.1f}"),
                        ("host", rng.choice(_ADJ) + " Hosting"),
                        ("address", _address(rng, city)),
                        ("phone", _phone(rng)),
                        ("description", rng.choice(_DESCRIPTIONS)),
                    ),
                )
            )
    # one stay per city that needs more nights than any plan gives it
    for city in cities:
        stays.append(
            Accommodation(
                f"Long Stay Suites {city}", city, 9000, "entire-room", (), 3, 4,
                (("review_rate", "4.0"), ("host", "Long Stay"), ("address", _address(rng, city)), ("phone", _phone(rng)), ("description", _DESCRIPTIONS[0])),
            )
        )

    legs = []
    stops = [origin] + cities + [origin]
    flights, routes = [], []
    for a, b in zip(stops, stops[1:]):
        for _ in range(3):
            dep = rng.randint(5, 20)
            flights.append(
                Flight(
                    f"F{rng.randint(1000000, 9999999)}",
                    a,
                    b,
                    f"{dep:02d}:{rng.randint(0, 59):02d}",
                    f"{dep + rng.randint(1, 3):02d}:{rng.randint(0, 59):02d}",
                    rng.randint(60, 500) * 100,
                    (("flight_date", "2022-03-01"), ("distance", str(rng.randint(100, 2500))), ("aircraft", "A320")),
                )
            )
        hours = rng.randint(1, 14)
        for mode in ("self-driving", "taxi"):
            routes.append(
                GroundRoute(
                    mode,
                    a,
                    b,
                    f"{hours} hours {rng.randint(1, 59)} mins",
                    rng.randint(20, 300) * 100 * (3 if mode == "taxi" else 1),
                    (("distance", f"{rng.randint(50, 1500)} km"),),
                )
            )
    ref = ReferenceBundle(tuple(flights), tuple(routes), tuple(restaurants), tuple(attractions), tuple(stays))

    # --- plan
    used_r, used_a = set(), set()

    def pick_restaurant(city):
        pool = [
            r
            for r in restaurants
            if r.city == city and (r.name, city) not in used_r and (not hc_cuisines or hc_cuisines & set(r.cuisines))
        ]
        # cover queried cuisines not yet served first
        served = {c for r in restaurants if (r.name, r.city) in used_r for c in r.cuisines}
        pool.sort(key=lambda r: (-len((hc_cuisines - served) & set(r.cuisines)), r.name))
        r = pool[0] if (hc_cuisines - served) else rng.choice(pool)
        used_r.add((r.name, city))
        return Place(r.name, city)

    def pick_attraction(city):
        pool = sorted(a.name for a in attractions if a.city == city and a.name not in used_a)
        name = rng.choice(pool)
        used_a.add(name)
        return Place(name, city)

    def pick_stay(city):
        ok = [
            s
            for s in stays
            if s.city == city
            and s.minimum_nights <= 2
            and (room_rule is None or s.allows(room_rule))
            and (room_type is None or s.has_room_type(room_type))
        ]
        s = min(ok, key=lambda s: (s.price * math.ceil(group / s.maximum_occupancy), s.name))
        return Place(s.name, city)

    stay_for = {c: pick_stay(c) for c in cities}
    days = []
    route = _route(origin, cities)
    leg_no = 0
    for n, (start, end) in enumerate(route, 1):
        last = n == len(route)
        if start != end:
            mode = modes[leg_no % len(modes)]
            leg_no += 1
            if mode == "flight":
                f = next(f for f in flights if f.origin == start and f.destination == end)
                leg = TransportLeg("flight", start, end, flight_number=f.flight_number, departure_time=f.departure_time, arrival_time=f.arrival_time)
            else:
                r = next(r for r in routes if r.mode == mode and r.origin == start and r.destination == end)
                leg = TransportLeg(mode, start, end, duration=r.duration, cost=r.cost)
            eat = start if last else end
            day = DayEntry(
                n,
                Transition(start, end),
                leg,
                breakfast=pick_restaurant(eat) if last else None,
                attractions=(pick_attraction(eat),),
                lunch=pick_restaurant(eat),
                dinner=None if last else pick_restaurant(eat),
                accommodation=None if last else stay_for[end],
            )
        else:
            day = DayEntry(
                n,
                end,
                None,
                breakfast=pick_restaurant(end),
                attractions=(pick_attraction(end), pick_attraction(end)),
                lunch=pick_restaurant(end),
                dinner=pick_restaurant(end),
                accommodation=stay_for[end],
            )
        days.append(day)
    plan = Plan(tuple(days))

    start = dt.date(2022, 3, 1) + dt.timedelta(days=rng.randint(0, 20))
    dates = tuple(start + dt.timedelta(days=i) for i in range(day_count))
    hc = HardConstraintSet(room_rule, room_type, hc_cuisines, None, transportation)
    provisional = TripQuery(f"q{seed}-{index:03d}", "", origin, region, city_count, day_count, group, dates, 100, hc)
    cost = compute_cost(plan, provisional, ref).grand_total
    budget = int(math.ceil(cost * 1.25 / 10000)) * 10000
    hc = replace(hc, budget=budget)
    text = _query_text(rng, origin, region, cities, day_count, group, dates, budget, hc)
    query = replace(provisional, text=text, budget=budget, hard_constraints=hc)
    return SplitRecord(query, ref, plan)


def _ordinal(n):
    return f"{n}{'th' if 10 <= n % 100 <= 20 else {1: 'st', 2: 'nd', 3: 'rd'}.get(n % 10, 'th')}"


def _query_text(rng, origin, region, cities, day_count, group, dates, budget, hc):
    first, last = dates[0], dates[-1]
    span = f"from March {_ordinal(first.day)} to March {_ordinal(last.day)}, 2022"
    who = "just me" if group == 1 else f"a group of {group}"
    if len(cities) == 1:
        where = f"heading to {cities[0]}"
    else:
        where = f"visiting {len(cities)} cities in {region}"
    parts = [
        f"Could you plan a {day_count}-day trip for {who}, departing from {origin} and {where} {span}?",
        f"The budget is ${budget // 100:,}.",
    ]
    if hc.room_rule:
        parts.append(_RULE_PHRASES[hc.room_rule])
    if hc.room_type:
        parts.append(_TYPE_PHRASES[hc.room_type])
    if hc.cuisines:
        names = [c for c in CUISINES if c in hc.cuisines]
        rng.shuffle(names)
        listed = names[0] if len(names) == 1 else ", ".join(names[:-1]) + " and " + names[-1]
        parts.append(f"We would love to try {listed} food during the trip.")
    if hc.transportation:
        parts.append(_TRANSPORT_PHRASES[hc.transportation])
    return " ".join(parts)


def generate_split(seed: int, count: int, start: int = 0) -> list:
    return [generate(seed, i) for i in range(start, start + count)]


# --- defects ---------------------------------------------------------------


def _swap_day(plan: Plan, n: int, **changes) -> Plan:
    days = list(plan.days)
    days[n - 1] = replace(days[n - 1], **changes)
    return Plan(tuple(days))


def repeat_attraction(plan: Plan, ref=None, rng=None) -> Optional[Plan]:
    d1, d2 = plan.days[0], plan.days[1]
    if not d1.attractions or not d2.attractions:
        return None
    return _swap_day(plan, 2, attractions=(d1.attractions[0],) + d2.attractions[1:])


def repeat_restaurant(plan: Plan, ref=None, rng=None) -> Optional[Plan]:
    d2 = plan.days[1]
    if d2.lunch is None or d2.dinner is None:
        return None
    return _swap_day(plan, 2, dinner=d2.lunch)


def hallucinate_restaurant(plan: Plan, ref=None, rng=None) -> Optional[Plan]:
    d2 = plan.days[1]
    if d2.lunch is None:
        return None
    return _swap_day(plan, 2, lunch=Place("Imaginary Noodle Palace", d2.lunch.city))


def drop_meal(plan: Plan, ref=None, rng=None) -> Optional[Plan]:
    d2 = plan.days[1]
    if d2.is_transition:
        return None
    return _swap_day(plan, 2, breakfast=None)


def violate_min_nights(plan: Plan, ref, rng=None) -> Optional[Plan]:
    stay = plan.days[0].accommodation
    if stay is None:
        return None
    long = next((a for a in ref.accommodations if a.city == stay.city and a.minimum_nights >= 3), None)
    if long is None:
        return None
    new = Place(long.name, long.city)
    days = [replace(d, accommodation=new) if d.accommodation == stay else d for d in plan.days]
    return Plan(tuple(days))


def conflict_transport(plan: Plan, ref, rng=None) -> Optional[Plan]:
    modes = {d.transport.mode for d in plan.days if d.transport}
    last = plan.days[-1]
    if last.transport is None:
        return None
    new_mode = "self-driving" if modes & {"flight", "taxi"} else "taxi"
    r = ref.find_route(new_mode, last.transport.from_city, last.transport.to_city)
    if r is None:
        return None
    leg = TransportLeg(new_mode, r.origin, r.destination, duration=r.duration, cost=r.cost)
    return _swap_day(plan, len(plan.days), transport=leg)


DEFECTS = {
    "repeat_attraction": (repeat_attraction, "valid_attractions"),
    "repeat_restaurant": (repeat_restaurant, "valid_restaurants"),
    "hallucinate_restaurant": (hallucinate_restaurant, "valid_information_in_sandbox"),
    "drop_meal": (drop_meal, "not_absent"),
    "violate_min_nights": (violate_min_nights, "valid_accommodation"),
    "conflict_transport": (conflict_transport, "valid_transportation"),
}
