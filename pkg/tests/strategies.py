"""Hypothesis strategies shared by the property tests."""

from __future__ import annotations

from hypothesis import strategies as st

from planloop.domain import CONSTRAINTS, DayEntry, Feedback, Place, Plan, Transition, TransportLeg, Verdict

CITIES = ["Seattle", "San Francisco", "New York", "St. Petersburg", "Salt Lake City", "Ithaca", "Charlotte", "Denver"]

_word = st.text(alphabet="abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789&'!()", min_size=1, max_size=8)
names = st.lists(_word, min_size=1, max_size=4).map(" ".join).filter(lambda s: s.strip("-") != "" and not s.endswith("."))
cities = st.sampled_from(CITIES).filter(lambda c: not c.endswith("."))
places = st.builds(Place, names, cities)
times = st.tuples(st.integers(0, 23), st.integers(0, 59)).map(lambda t: f"{t[0]:02d}:{t[1]:02d}")
durations = st.tuples(st.integers(0, 30), st.integers(1, 59)).map(lambda t: f"{t[0]} hours {t[1]} mins")
costs = st.one_of(st.none(), st.integers(0, 500_000))


@st.composite
def legs(draw, a, b):
    mode = draw(st.sampled_from(["flight", "self-driving", "taxi"]))
    if mode == "flight":
        return TransportLeg(
            "flight",
            a,
            b,
            flight_number="F" + str(draw(st.integers(1000000, 9999999))),
            departure_time=draw(times),
            arrival_time=draw(times),
            cost=draw(costs),
        )
    return TransportLeg(mode, a, b, duration=draw(durations), cost=draw(costs))


@st.composite
def plans(draw, max_days=7):
    n = draw(st.integers(1, max_days))
    days = []
    for i in range(1, n + 1):
        if draw(st.booleans()):
            a, b = draw(cities), draw(cities)
            city = Transition(a, b)
            leg = draw(st.one_of(st.none(), legs(a, b)))
        else:
            city = draw(cities)
            leg = None
        opt = st.one_of(st.none(), places)
        days.append(
            DayEntry(
                i,
                city,
                leg,
                breakfast=draw(opt),
                attractions=tuple(draw(st.lists(places, max_size=3))),
                lunch=draw(opt),
                dinner=draw(opt),
                accommodation=draw(opt),
            )
        )
    return Plan(tuple(days))


reasons = st.text(alphabet="abcdefghijklmnopqrstuvwxyz ABCDEFGHIJ0123456789.,'()", max_size=60).map(str.strip)


@st.composite
def feedbacks(draw):
    verdicts = []
    for _ in CONSTRAINTS:
        if draw(st.booleans()):
            verdicts.append(Verdict.success())
        else:
            verdicts.append(Verdict.fail(draw(reasons)))
    return Feedback(tuple(verdicts))
