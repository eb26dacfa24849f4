from __future__ import annotations

import random
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from planloop import synth
from planloop.codec import parse_plan
from planloop.domain import (
    Accommodation,
    Attraction,
    ConstraintId,
    Flight,
    GroundRoute,
    HardConstraintSet,
    Place,
    Plan,
    ReferenceBundle,
    Restaurant,
    TripQuery,
)
from planloop.oracle import (
    REASONS,
    UnresolvedEntity,
    check,
    check_commonsense,
    check_hard,
    compute_cost,
    repeated_entities,
)

C = ConstraintId


def _swap(plan, n, **kw):
    days = list(plan.days)
    days[n - 1] = replace(days[n - 1], **kw)
    return Plan(tuple(days))


def test_seattle_sample_plan_passes_everything(seattle):
    query, ref, plan = seattle
    fb = check_commonsense(plan, query, ref)
    assert fb.all_success, [(c.label, fb[c].reason) for c in fb.failed()]
    hv = check_hard(plan, query, ref)
    assert hv.all_pass
    assert set(hv.applicable()) == {"room_rule", "cuisine", "budget", "transportation"}


def test_seattle_cost_hand_computed(seattle):
    # self-driving 65 + 65; meals (52+21+64+75+38+27) x 4 people; 2 nights x 295 x 1 room
    query, ref, plan = seattle
    cost = compute_cost(plan, query, ref)
    assert cost.transport_total == 13_000
    assert cost.meals_total == 110_800
    assert cost.lodging_total == 59_000
    assert cost.grand_total == 182_800
    assert sum(i.subtotal for i in cost.line_items) == cost.grand_total


def double_defect_scenario(seattle):
    """Draft: day-1 attraction repeated on day 2 and a 3-night-minimum stay for 2 nights."""
    query, ref, plan = seattle
    gg_park = Place("Golden Gate Park", "San Francisco")
    bay = Place("Bay View Suite", "San Francisco")
    draft = _swap(plan, 1, attractions=(gg_park,), accommodation=bay)
    draft = _swap(draft, 2, accommodation=bay)
    fixed = _swap(draft, 1, attractions=(Place("Alcatraz Island", "San Francisco"),), accommodation=plan.days[0].accommodation)
    fixed = _swap(fixed, 2, accommodation=plan.days[1].accommodation)
    return query, ref, draft, fixed


def test_double_defect_scenario_exact_failures(seattle):
    query, ref, draft, fixed = double_defect_scenario(seattle)
    fb = check_commonsense(draft, query, ref)
    assert fb.failed() == [C.VALID_ATTRACTIONS, C.VALID_ACCOMMODATION]
    assert fb[C.VALID_ATTRACTIONS].reason == "The attraction in day 2 is repeated."
    assert fb[C.VALID_ACCOMMODATION].reason == (
        "The accommodation Bay View Suite, San Francisco do not obey the minumum nights rule."
    )
    assert check_commonsense(fixed, query, ref).all_success


def test_closed_circle_and_city_count(seattle):
    query, ref, plan = seattle
    bad = _swap(plan, 3, current_city=replace(plan.days[2].current_city, to_city="Portland"))
    fb = check_commonsense(bad, query, ref)
    assert C.REASONABLE_VISITING_CITY in fb.failed()
    assert "closed circle" in fb[C.REASONABLE_VISITING_CITY].reason
    two_cities = replace(query, city_count=2)
    assert "visit 2 cities" in check_commonsense(plan, two_cities, ref)[C.REASONABLE_VISITING_CITY].reason


def test_conflicting_transport(seattle):
    query, ref, plan = seattle
    leg = replace(plan.days[2].transport, mode="taxi", duration="12 hours 25 mins", cost=None)
    fb = check_commonsense(_swap(plan, 3, transport=leg), query, ref)
    assert fb.failed() == [C.VALID_TRANSPORTATION]


def test_current_city_violation(seattle):
    query, ref, plan = seattle
    fb = check_commonsense(_swap(plan, 2, lunch=Place("Bonne Bouche", "Seattle")), query, ref)
    assert C.VALID_INFORMATION_IN_CURRENT_CITY in fb.failed()
    assert fb[C.VALID_INFORMATION_IN_CURRENT_CITY].reason == "The lunch in day 2 is invalid in the current city."


def test_hallucinated_entity_fails_sandbox(seattle):
    query, ref, plan = seattle
    fb = check_commonsense(_swap(plan, 2, dinner=Place("Imaginary Bistro", "San Francisco")), query, ref)
    assert fb.failed() == [C.VALID_INFORMATION_IN_SANDBOX]
    assert fb[C.VALID_INFORMATION_IN_SANDBOX].reason == "The dinner in day 2 is invalid in the sandbox."


def test_deleting_a_used_row_is_hallucination(seattle):
    query, ref, plan = seattle
    smaller = replace(ref, restaurants=tuple(r for r in ref.restaurants if r.name != "Empress"))
    fb = check_commonsense(plan, query, smaller)
    assert fb.failed() == [C.VALID_INFORMATION_IN_SANDBOX]


def test_missing_meal_on_full_day(seattle):
    query, ref, plan = seattle
    fb = check_commonsense(_swap(plan, 2, breakfast=None), query, ref)
    assert fb.failed() == [C.NOT_ABSENT]
    assert fb[C.NOT_ABSENT].reason == "No meal in day 2 is not allowed."


def test_multiple_violations_are_all_reported(seattle):
    query, ref, plan = seattle
    bad = _swap(plan, 2, lunch=plan.days[1].breakfast, dinner=plan.days[1].breakfast)
    reason = check_commonsense(bad, query, ref)[C.VALID_RESTAURANTS].reason
    assert reason == "The restaurant in day 2 lunch is repeated. The restaurant in day 2 dinner is repeated."


def test_every_reason_template_formats():
    for cid, templates in REASONS.items():
        for t in templates:
            t.format(day=1, slot="lunch", n=2, name="X")


def test_hard_constraint_failures(seattle):
    query, ref, plan = seattle
    loft = Place("Sunny Loft near Mission", "San Francisco")
    hv = check_hard(_swap(_swap(plan, 1, accommodation=loft), 2, accommodation=loft), query, ref)
    assert not hv.room_rule.ok and "No pets" in hv.room_rule.reason
    cheap = replace(query, budget=100_000, hard_constraints=replace(query.hard_constraints, budget=100_000))
    assert not check_hard(plan, cheap, ref).budget.ok
    no_drive = replace(query, hard_constraints=replace(query.hard_constraints, transportation="no-self-driving"))
    assert not check_hard(plan, no_drive, ref).transportation.ok
    uncovered = replace(query, hard_constraints=replace(query.hard_constraints, cuisines=frozenset({"Chinese", "Italian"})))
    assert check_hard(plan, uncovered, ref).cuisine.reason == "The cuisine Italian is not satisfied."


def test_gate_withholds_hard_verdicts(seattle):
    query, ref, plan = seattle
    bad = _swap(plan, 2, breakfast=None)
    assert check(bad, query, ref).hard is None
    assert check(bad, query, ref, gate=False).hard is not None
    assert check(plan, query, ref).to_json()["hard"]["budget"]["ok"] is True


def test_unresolved_cost_raises(seattle):
    query, ref, plan = seattle
    with pytest.raises(UnresolvedEntity):
        compute_cost(_swap(plan, 2, dinner=Place("Nowhere", "San Francisco")), query, ref)


@settings(max_examples=80)
@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_repeat_detection_is_order_free(seed, rng):
    plan = synth.generate(seed, 0).plan
    days = list(plan.days)
    rng.shuffle(days)
    shuffled = Plan(tuple(replace(d, day=i) for i, d in enumerate(days, 1)))
    assert repeated_entities(plan) == repeated_entities(shuffled)


@settings(max_examples=60)
@given(st.integers(0, 10_000), st.sampled_from(sorted(synth.DEFECTS)))
def test_each_defect_fails_its_constraint(seed, defect):
    rec = synth.generate(seed, 1)
    fn, key = synth.DEFECTS[defect]
    bad = fn(rec.plan, rec.reference)
    if bad is None:
        return
    failed = [c.key for c in check_commonsense(bad, rec.query, rec.reference).failed()]
    assert key in failed


@settings(max_examples=40)
@given(st.integers(0, 10_000))
def test_monotone_under_sandbox_growth(seed):
    """Adding rows never turns a passing sandbox check into a failure."""
    rec = synth.generate(seed, 2)
    bad = synth.hallucinate_restaurant(rec.plan)
    extra = Restaurant("Imaginary Noodle Palace", bad.days[1].lunch.city, ("Chinese",), 1500)
    bigger = replace(rec.reference, restaurants=rec.reference.restaurants + (extra,))
    assert check_commonsense(rec.plan, rec.query, bigger).all_success
    assert check_commonsense(bad, rec.query, bigger)[C.VALID_INFORMATION_IN_SANDBOX].ok


# --- budget: independent brute-force line items ----------------------------


def small_fixture(rng: random.Random):
    """A <=3-day single-destination trip with <=5 options per table, as plain dicts."""
    home, city = "Homeville", "Targetburg"
    days = rng.randint(1, 3)
    group = rng.randint(1, 6)
    T = {
        "flights": [
            {"flight_number": f"F{100 + i}", "origin": o, "destination": d, "price": rng.randint(1, 900) * 100 + rng.choice([0, 50, 99])}
            for i, (o, d) in enumerate([(home, city), (city, home), (home, city)][: rng.randint(2, 3)])
        ],
        "ground": [
            {"mode": m, "origin": o, "destination": d, "cost": rng.randint(1, 500) * 100 + rng.choice([0, 25])}
            for m in ("taxi", "self-driving")
            for o, d in ((home, city), (city, home))
        ][: rng.randint(2, 4)],
        "restaurants": [{"name": f"Eatery {i}", "average_cost": rng.randint(500, 9999)} for i in range(rng.randint(1, 5))],
        "attractions": [{"name": f"Sight {i}"} for i in range(rng.randint(1, 5))],
        "stays": [
            {"name": f"Stay {i}", "price": rng.randint(3000, 90000), "max_occ": rng.randint(1, 5)}
            for i in range(rng.randint(1, 5))
        ],
    }
    # random (not necessarily sensible) choices per slot
    choices = []
    for d in range(1, days + 1):
        slot = {}
        if d == 1 or d == days:
            pool = [("flight", f) for f in T["flights"]] + [("ground", g) for g in T["ground"]]
            slot["transport"] = rng.choice(pool + [None])
        slot["meals"] = [rng.choice(T["restaurants"] + [None]) for _ in range(3)]
        slot["stay"] = rng.choice(T["stays"] + [None])
        choices.append(slot)
    return home, city, days, group, T, choices


def brute_force_cost(group, choices) -> int:
    total = 0
    for day in choices:
        t = day.get("transport")
        if t is not None:
            kind, row = t
            total += row["price"] * group if kind == "flight" else row["cost"]
        for m in day["meals"]:
            if m is not None:
                total += m["average_cost"] * group
        if day["stay"] is not None:
            total += day["stay"]["price"] * -(-group // day["stay"]["max_occ"])
    return total


def to_domain(home, city, days, group, T, choices):
    ref = ReferenceBundle(
        flights=tuple(Flight(f["flight_number"], f["origin"], f["destination"], "08:00", "10:00", f["price"]) for f in T["flights"]),
        ground_routes=tuple(GroundRoute(g["mode"], g["origin"], g["destination"], "3 hours 5 mins", g["cost"]) for g in T["ground"]),
        restaurants=tuple(Restaurant(r["name"], city, ("Italian",), r["average_cost"]) for r in T["restaurants"]),
        attractions=tuple(Attraction(a["name"], city) for a in T["attractions"]),
        accommodations=tuple(Accommodation(s["name"], city, s["price"], "entire-room", (), 1, s["max_occ"]) for s in T["stays"]),
    )
    lines = []
    for i, day in enumerate(choices, 1):
        lines.append(f"Day {i}:")
        lines.append(f"Current City: from {home} to {city}" if i == 1 else f"Current City: {city}")
        t = day.get("transport")
        if t is None:
            lines.append("Transportation: -")
        elif t[0] == "flight":
            f = t[1]
            lines.append(f"Transportation: Flight Number: {f['flight_number']}, from {f['origin']} to {f['destination']}")
        else:
            g = t[1]
            head = "Taxi" if g["mode"] == "taxi" else "Self-driving"
            lines.append(f"Transportation: {head} from {g['origin']} to {g['destination']}")
        for label, m in zip(("Breakfast", "Lunch", "Dinner"), day["meals"]):
            lines.append(f"{label}: {m['name']}, {city}" if m else f"{label}: -")
        lines.append("Attraction: -")
        lines.append(f"Accommodation: {day['stay']['name']}, {city}" if day["stay"] else "Accommodation: -")
        lines.append("")
    plan, diag = parse_plan("\n".join(lines), days)
    assert plan is not None, diag.fatal
    query = TripQuery("b", "budget test", home, city, 1, days, group, tuple(f"2022-03-0{i}" for i in range(1, days + 1)), 10_000_00, HardConstraintSet())
    return query, ref, plan


def run_budget_equivalence(n=50, seed=0) -> int:
    rng = random.Random(seed)
    for _ in range(n):
        fx = small_fixture(rng)
        query, ref, plan = to_domain(*fx)
        assert compute_cost(plan, query, ref).grand_total == brute_force_cost(fx[3], fx[5])
    return n


def test_budget_matches_brute_force():
    assert run_budget_equivalence() == 50
