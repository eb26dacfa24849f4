"""Shared vocabulary: queries, reference sandboxes, plans, constraints, feedback.

Unnecessary plan slots (rendered ``-``) are ``None`` for single slots and an
empty tuple for attractions. A slot that the parser could not find at all never
reaches this layer; see :mod:`planloop.codec`.
"""

from __future__ import annotations

import datetime as dt
import enum
import re
from dataclasses import dataclass, field
from functools import cached_property
from decimal import ROUND_HALF_UP, Decimal, InvalidOperation
from typing import Iterable, Iterator, Mapping, Optional, Union

CUISINES = ("American", "Chinese", "French", "Indian", "Italian", "Mediterranean", "Mexican")

# room rule -> house-rule phrase that forbids it
ROOM_RULES = {
    "pets-allowed": "No pets",
    "parties-allowed": "No parties",
    "smoking-allowed": "No smoking",
    "children-allowed": "No children under 10",
    "visitors-allowed": "No visitors",
}

ROOM_TYPES = ("entire-room", "private-room", "shared-room", "not-shared-room")

# listing values seen in accommodation tables -> canonical room type
ROOM_TYPE_ALIASES = {
    "entire-room": "entire-room",
    "entire room": "entire-room",
    "entire home/apt": "entire-room",
    "private-room": "private-room",
    "private room": "private-room",
    "shared-room": "shared-room",
    "shared room": "shared-room",
}

TRANSPORT_RULES = {"no-flight": "flight", "no-self-driving": "self-driving"}
TRANSPORT_MODES = ("flight", "self-driving", "taxi")


class DomainError(ValueError):
    pass


# --- money -----------------------------------------------------------------


def to_cents(value: Union[str, int, float, Decimal]) -> int:
    """Parse a dollar amount (``"$1,234.5"``, ``65``, ``"65"``) into integer cents."""
    if isinstance(value, int):
        return value * 100
    text = str(value).strip().replace("$", "").replace(",", "")
    try:
        amount = Decimal(text)
    except InvalidOperation:
        raise DomainError(f"not a money amount: {value!r}") from None
    if amount.is_nan() or amount.is_infinite():
        raise DomainError(f"not a money amount: {value!r}")
    return int((amount * 100).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def format_money(cents: int) -> str:
    if cents % 100 == 0:
        return f"${cents // 100}"
    sign = "-" if cents < 0 else ""
    cents = abs(cents)
    return f"{sign}${cents // 100}.{cents % 100:02d}"


def fold(text: str) -> str:
    """Matching key for entity names and cities: trimmed, inner whitespace collapsed, case-folded."""
    return " ".join(text.split()).casefold()


# --- queries ---------------------------------------------------------------


@dataclass(frozen=True)
class HardConstraintSet:
    room_rule: Optional[str] = None
    room_type: Optional[str] = None
    cuisines: frozenset = frozenset()
    budget: Optional[int] = None  # cents; None means unbounded
    transportation: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "cuisines", frozenset(self.cuisines))
        unknown = self.cuisines - set(CUISINES)
        if unknown:
            raise DomainError(f"unknown cuisines: {sorted(unknown)}")
        if self.room_rule is not None and self.room_rule not in ROOM_RULES:
            raise DomainError(f"unknown room rule: {self.room_rule!r}")
        if self.room_type is not None and self.room_type not in ROOM_TYPES:
            raise DomainError(f"unknown room type: {self.room_type!r}")
        if self.transportation is not None and self.transportation not in TRANSPORT_RULES:
            raise DomainError(f"unknown transportation rule: {self.transportation!r}")

    def to_json(self) -> dict:
        out: dict = {"cuisines": sorted(self.cuisines)}
        for key in ("room_rule", "room_type", "transportation"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.budget is not None:
            out["budget"] = self.budget / 100
        return out


@dataclass(frozen=True)
class TripQuery:
    id: str
    text: str
    origin_city: str
    destination_region: str
    city_count: int
    day_count: int
    group_size: int
    dates: tuple
    budget: int  # cents
    hard_constraints: HardConstraintSet = field(default_factory=HardConstraintSet)

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        if self.city_count < 1 or self.group_size < 1 or self.day_count < 1:
            raise DomainError(f"query {self.id}: counts must be positive")
        if len(self.dates) != self.day_count:
            raise DomainError(
                f"query {self.id}: {len(self.dates)} dates for {self.day_count} days"
            )
        if self.budget <= 0:
            raise DomainError(f"query {self.id}: budget must be positive")


# --- reference sandbox -----------------------------------------------------

Extra = tuple  # ordered ((column, value), ...) pairs


@dataclass(frozen=True)
class Flight:
    flight_number: str
    origin: str
    destination: str
    departure_time: str
    arrival_time: str
    price: int
    extra: Extra = ()


@dataclass(frozen=True)
class GroundRoute:
    mode: str
    origin: str
    destination: str
    duration: str
    cost: int
    extra: Extra = ()


@dataclass(frozen=True)
class Restaurant:
    name: str
    city: str
    cuisines: tuple
    average_cost: int
    extra: Extra = ()


@dataclass(frozen=True)
class Attraction:
    name: str
    city: str
    extra: Extra = ()


@dataclass(frozen=True)
class Accommodation:
    name: str
    city: str
    price: int
    room_type: str
    house_rules: tuple
    minimum_nights: int
    maximum_occupancy: int
    extra: Extra = ()

    def allows(self, room_rule: str) -> bool:
        forbidden = fold(ROOM_RULES[room_rule])
        return all(fold(r) != forbidden for r in self.house_rules)

    def has_room_type(self, wanted: str) -> bool:
        if wanted == "not-shared-room":
            return self.room_type != "shared-room"
        return self.room_type == wanted


TABLES = ("flights", "ground_routes", "restaurants", "attractions", "accommodations")


@dataclass(frozen=True)
class ReferenceBundle:
    flights: tuple = ()
    ground_routes: tuple = ()
    restaurants: tuple = ()
    attractions: tuple = ()
    accommodations: tuple = ()

    def __post_init__(self):
        for name in TABLES:
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def table(self, name: str) -> tuple:
        return getattr(self, name)

    def extra_columns(self) -> dict:
        """Per-table list of auxiliary column names, in first-seen order."""
        out = {}
        for name in TABLES:
            cols: list = []
            for row in self.table(name):
                for key, _ in row.extra:
                    if key not in cols:
                        cols.append(key)
            out[name] = cols
        return out

    @cached_property
    def _by_name(self) -> dict:
        # first row wins, same as a linear scan
        index: dict = {}
        for table in ("restaurants", "attractions", "accommodations"):
            rows: dict = {}
            for row in self.table(table):
                rows.setdefault((fold(row.name), fold(row.city)), row)
            index[table] = rows
        return index

    def find_restaurant(self, name: str, city: str) -> Optional[Restaurant]:
        return self._by_name["restaurants"].get((fold(name), fold(city)))

    def find_attraction(self, name: str, city: str) -> Optional[Attraction]:
        return self._by_name["attractions"].get((fold(name), fold(city)))

    def find_accommodation(self, name: str, city: str) -> Optional[Accommodation]:
        return self._by_name["accommodations"].get((fold(name), fold(city)))

    def find_flight(self, number: str, origin: str, destination: str) -> Optional[Flight]:
        for f in self.flights:
            if (
                fold(f.flight_number) == fold(number)
                and fold(f.origin) == fold(origin)
                and fold(f.destination) == fold(destination)
            ):
                return f
        return None

    def find_route(self, mode: str, origin: str, destination: str) -> Optional[GroundRoute]:
        for r in self.ground_routes:
            if (
                r.mode == mode
                and fold(r.origin) == fold(origin)
                and fold(r.destination) == fold(destination)
            ):
                return r
        return None


# --- plans -----------------------------------------------------------------


@dataclass(frozen=True)
class Place:
    name: str
    city: str = ""


@dataclass(frozen=True)
class Transition:
    from_city: str
    to_city: str


@dataclass(frozen=True)
class TransportLeg:
    """One inter-city move. ``mode == "unknown"`` keeps text the parser could not classify."""

    mode: str
    from_city: str = ""
    to_city: str = ""
    flight_number: Optional[str] = None
    departure_time: Optional[str] = None
    arrival_time: Optional[str] = None
    duration: Optional[str] = None
    cost: Optional[int] = None
    raw: Optional[str] = None

    def __post_init__(self):
        if (self.mode == "flight") != (self.flight_number is not None):
            raise DomainError("flight_number is required exactly for flight legs")


@dataclass(frozen=True)
class DayEntry:
    day: int
    current_city: Union[str, Transition]
    transport: Optional[TransportLeg] = None
    breakfast: Optional[Place] = None
    attractions: tuple = ()
    lunch: Optional[Place] = None
    dinner: Optional[Place] = None
    accommodation: Optional[Place] = None

    def __post_init__(self):
        object.__setattr__(self, "attractions", tuple(self.attractions))

    @property
    def is_transition(self) -> bool:
        return isinstance(self.current_city, Transition)

    @property
    def start_city(self) -> str:
        c = self.current_city
        return c.from_city if isinstance(c, Transition) else c

    @property
    def end_city(self) -> str:
        c = self.current_city
        return c.to_city if isinstance(c, Transition) else c

    @property
    def cities(self) -> tuple:
        return (self.start_city, self.end_city) if self.is_transition else (self.end_city,)

    def meals(self) -> Iterator[tuple]:
        for slot in MEAL_SLOTS:
            yield slot, getattr(self, slot)


MEAL_SLOTS = ("breakfast", "lunch", "dinner")


@dataclass(frozen=True)
class Plan:
    days: tuple

    def __post_init__(self):
        object.__setattr__(self, "days", tuple(self.days))
        if not self.days:
            raise DomainError("a plan needs at least one day")
        for i, d in enumerate(self.days, 1):
            if d.day != i:
                raise DomainError(f"day indices must run 1..n, got {d.day} at position {i}")

    def __len__(self):
        return len(self.days)


# --- entities --------------------------------------------------------------


@dataclass(frozen=True)
class EntityRef:
    kind: str  # restaurant | attraction | accommodation | flight | ground_route
    name: str
    city: str
    day: int = 0
    slot: str = ""


def extract_entities(plan: Plan) -> list:
    """Every non-``-`` slot as an :class:`EntityRef`, day-major.

    Within a day the order is breakfast, attractions, lunch, dinner,
    accommodation, transport. Transport refs use the flight number (or the
    mode) as name and the departure city as city.
    """
    refs = []
    for d in plan.days:
        if d.breakfast is not None:
            refs.append(EntityRef("restaurant", d.breakfast.name, d.breakfast.city, d.day, "breakfast"))
        for a in d.attractions:
            refs.append(EntityRef("attraction", a.name, a.city, d.day, "attraction"))
        for slot in ("lunch", "dinner"):
            p = getattr(d, slot)
            if p is not None:
                refs.append(EntityRef("restaurant", p.name, p.city, d.day, slot))
        if d.accommodation is not None:
            a = d.accommodation
            refs.append(EntityRef("accommodation", a.name, a.city, d.day, "accommodation"))
        leg = d.transport
        if leg is not None:
            if leg.mode == "flight":
                refs.append(EntityRef("flight", leg.flight_number, leg.from_city, d.day, "flight"))
            else:
                refs.append(EntityRef("ground_route", leg.mode, leg.from_city, d.day, leg.mode))
    return refs


# --- feedback --------------------------------------------------------------


class ConstraintId(enum.Enum):
    """The eight commonsense constraints, in feedback order.

    ``label`` is the serialized key; the first one keeps its historical
    misspelling so feedback text stays byte-compatible with existing corpora.
    """

    REASONABLE_VISITING_CITY = "is_reasonalbe_visiting_city"
    VALID_RESTAURANTS = "is_valid_restaurants"
    VALID_ATTRACTIONS = "is_valid_attractions"
    VALID_ACCOMMODATION = "is_valid_accommodation"
    VALID_TRANSPORTATION = "is_valid_transportation"
    VALID_INFORMATION_IN_CURRENT_CITY = "is_valid_information_in_current_city"
    VALID_INFORMATION_IN_SANDBOX = "is_valid_information_in_sandbox"
    NOT_ABSENT = "is_not_absent"

    @property
    def label(self) -> str:
        return self.value

    @property
    def key(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "ConstraintId":
        return cls(label.strip())


CONSTRAINTS = tuple(ConstraintId)


@dataclass(frozen=True)
class Verdict:
    ok: bool
    reason: str = ""

    @classmethod
    def success(cls) -> "Verdict":
        return cls(True)

    @classmethod
    def fail(cls, reason: str = "") -> "Verdict":
        return cls(False, reason)


class FeedbackFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Feedback:
    """Verdicts for all eight constraints, stored in canonical order."""

    verdicts: tuple
    all_success: bool = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        v = tuple(self.verdicts)
        if len(v) != len(CONSTRAINTS):
            raise FeedbackFormatError(f"expected {len(CONSTRAINTS)} verdicts, got {len(v)}")
        object.__setattr__(self, "verdicts", v)
        object.__setattr__(self, "all_success", all(x.ok for x in v))

    @classmethod
    def from_map(cls, verdicts: Mapping) -> "Feedback":
        missing = [c.label for c in CONSTRAINTS if c not in verdicts]
        if missing:
            raise FeedbackFormatError(f"missing verdicts: {missing}")
        return cls(tuple(verdicts[c] for c in CONSTRAINTS))

    @classmethod
    def all_successful(cls) -> "Feedback":
        return cls(tuple(Verdict.success() for _ in CONSTRAINTS))

    def __getitem__(self, cid: ConstraintId) -> Verdict:
        return self.verdicts[CONSTRAINTS.index(cid)]

    def items(self) -> Iterable[tuple]:
        return zip(CONSTRAINTS, self.verdicts)

    def failed(self) -> list:
        return [c for c, v in self.items() if not v.ok]


def is_all_success(feedback: Feedback) -> bool:
    return feedback.all_success


def render_feedback(feedback: Feedback) -> str:
    lines = []
    for cid, v in feedback.items():
        if v.ok:
            lines.append(f"{cid.label}: success")
        else:
            lines.append(f"{cid.label}: fail, reason:{v.reason}")
    return "\n".join(lines)


_FEEDBACK_LINE = re.compile(
    r"^\s*\*?\s*(?P<label>is_[a-z_]+)\s*:\s*(?P<verdict>success|fail)\b\s*(?:,?\s*reason\s*:(?P<reason>.*))?$",
    re.IGNORECASE,
)


def parse_feedback(text: str, strict: bool = True) -> Feedback:
    """Parse an 8-line feedback block.

    ``strict=False`` is for model-written feedback: unknown lines are skipped
    and constraints that are never mentioned count as success.
    """
    found: dict = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        m = _FEEDBACK_LINE.match(line)
        cid = None
        if m:
            try:
                cid = ConstraintId.from_label(m["label"].lower())
            except ValueError:
                cid = None
        if cid is None:
            if strict:
                raise FeedbackFormatError(f"line {lineno}: not a feedback line: {line!r}")
            continue
        if cid in found:
            if strict:
                raise FeedbackFormatError(f"line {lineno}: duplicate verdict for {cid.label}")
            continue
        if m["verdict"].lower() == "success":
            found[cid] = Verdict.success()
        else:
            found[cid] = Verdict.fail(m["reason"] or "")
    if not strict:
        for cid in CONSTRAINTS:
            found.setdefault(cid, Verdict.success())
    return Feedback.from_map(found)


def parse_date(value: str) -> dt.date:
    return dt.date.fromisoformat(value)
