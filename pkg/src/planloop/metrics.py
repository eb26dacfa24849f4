"""Pass rates, hallucination rate and refinement deltas.

All rates are percentages rounded half-up to one decimal, computed from exact
fractions.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction
from typing import Optional, Sequence

from .domain import CONSTRAINTS, ConstraintId, Plan, ReferenceBundle, TripQuery
from .oracle import ORACLE_VERSION, HardVerdicts, check_commonsense, check_hard

HARD_KEYS = HardVerdicts.FIELDS
GATES = ("commonsense", "sandbox", "none")


class EmptyCorpus(ValueError):
    pass


class MisalignedCorpora(ValueError):
    pass


def pct(num: int, den: int) -> float:
    """``100 * num / den`` rounded half-up to 0.1."""
    value = Fraction(100 * num, den)
    d = Decimal(value.numerator) / Decimal(value.denominator)
    return float(d.quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True)
class EvalRecord:
    query_id: str
    delivered: bool
    commonsense: tuple  # 8 bools in constraint order
    hard: dict  # applicable hard constraint -> bool
    hallucinated: bool = False

    @property
    def passed_count_commonsense(self) -> int:
        return sum(self.commonsense)

    @property
    def commonsense_pass(self) -> bool:
        return all(self.commonsense)

    @property
    def hard_pass(self) -> bool:
        return all(self.hard.values())

    def to_json(self) -> dict:
        d = asdict(self)
        d["commonsense"] = {c.label: ok for c, ok in zip(CONSTRAINTS, self.commonsense)}
        return d


def applicable_hard(query: TripQuery) -> list:
    hc = query.hard_constraints
    keys = []
    if hc.room_rule is not None:
        keys.append("room_rule")
    if hc.room_type is not None:
        keys.append("room_type")
    if hc.cuisines:
        keys.append("cuisine")
    keys.append("budget")
    if hc.transportation is not None:
        keys.append("transportation")
    return keys


def evaluate(plan: Optional[Plan], query: TripQuery, ref: ReferenceBundle, gate: str = "commonsense") -> EvalRecord:
    """Score one outcome against the full (unscrubbed) sandbox.

    ``plan=None`` is a delivery failure and fails everything. Hard
    constraints are checked only when the gate passes (``commonsense``: all
    eight; ``sandbox``: sandbox and completeness only; ``none``: always);
    otherwise every applicable hard constraint counts as failed.
    """
    if gate not in GATES:
        raise ValueError(f"unknown gate {gate!r}")
    keys = applicable_hard(query)
    if plan is None:
        return EvalRecord(query.id, False, (False,) * len(CONSTRAINTS), {k: False for k in keys})
    fb = check_commonsense(plan, query, ref)
    if gate == "commonsense":
        open_ = fb.all_success
    elif gate == "sandbox":
        open_ = fb[ConstraintId.VALID_INFORMATION_IN_SANDBOX].ok and fb[ConstraintId.NOT_ABSENT].ok
    else:
        open_ = True
    if open_:
        hv = check_hard(plan, query, ref).applicable()
        hard = {k: hv[k].ok for k in keys}
    else:
        hard = {k: False for k in keys}
    return EvalRecord(
        query.id,
        True,
        tuple(v.ok for v in fb.verdicts),
        hard,
        hallucinated=not fb[ConstraintId.VALID_INFORMATION_IN_SANDBOX].ok,
    )


@dataclass(frozen=True)
class MetricsReport:
    count: int
    delivery_rate: float
    commonsense_micro: float
    commonsense_macro: float
    hard_micro: float
    hard_macro: float
    final_pass_rate: float
    hallucination_rate: float
    meta: dict = field(default_factory=dict, compare=False)

    COLUMNS = (
        ("delivery_rate", "Delivery"),
        ("commonsense_micro", "CS Micro"),
        ("commonsense_macro", "CS Macro"),
        ("hard_micro", "Hard Micro"),
        ("hard_macro", "Hard Macro"),
        ("final_pass_rate", "Final"),
        ("hallucination_rate", "Halluc."),
    )

    def to_json(self) -> dict:
        return asdict(self)

    def invariant_violations(self) -> list:
        """Ordering facts that must hold for any corpus; empty when sound."""
        out = []
        if self.commonsense_macro > self.commonsense_micro:
            out.append("commonsense macro > micro")
        if self.final_pass_rate > min(self.commonsense_macro, self.hard_macro):
            out.append("final > min(commonsense macro, hard macro)")
        return out


def aggregate(records: Sequence[EvalRecord], gate: str = "commonsense") -> MetricsReport:
    n = len(records)
    if n == 0:
        raise EmptyCorpus("no records to aggregate")
    cs_passed = sum(r.passed_count_commonsense for r in records)
    hard_total = sum(len(r.hard) for r in records)
    hard_passed = sum(sum(r.hard.values()) for r in records)
    report = MetricsReport(
        count=n,
        delivery_rate=pct(sum(r.delivered for r in records), n),
        commonsense_micro=pct(cs_passed, len(CONSTRAINTS) * n),
        commonsense_macro=pct(sum(r.commonsense_pass for r in records), n),
        hard_micro=pct(hard_passed, hard_total) if hard_total else 100.0,
        hard_macro=pct(sum(r.hard_pass for r in records), n),
        final_pass_rate=pct(sum(r.commonsense_pass and r.hard_pass for r in records), n),
        hallucination_rate=pct(sum(r.hallucinated for r in records), n),
        meta={"hard_gate": gate, "oracle_version": ORACLE_VERSION},
    )
    # pooled hard micro can legitimately fall below hard macro when queries
    # impose different numbers of hard constraints; surface it, don't fail
    if report.hard_macro > report.hard_micro:
        report.meta["note"] = "hard macro exceeds pooled hard micro (uneven constraint counts)"
    return report


@dataclass(frozen=True)
class DeltaReport:
    count: int
    uplift_ratio: float
    flat_ratio: float
    downgrade_ratio: float
    uplift: int = 0
    flat: int = 0
    downgrade: int = 0

    def to_json(self) -> dict:
        return asdict(self)


def classify_delta(before: EvalRecord, after: EvalRecord) -> str:
    b, a = before.passed_count_commonsense, after.passed_count_commonsense
    return "uplift" if a > b else "downgrade" if a < b else "flat"


def refinement_deltas(before: Sequence[EvalRecord], after: Sequence[EvalRecord]) -> DeltaReport:
    """Per query: more commonsense constraints passed is an uplift, fewer a downgrade."""
    if len(before) != len(after):
        raise MisalignedCorpora(f"{len(before)} vs {len(after)} records")
    if not before:
        raise EmptyCorpus("no records to compare")
    after_by_id = {r.query_id: r for r in after}
    if len(after_by_id) != len(after) or set(after_by_id) != {r.query_id for r in before}:
        raise MisalignedCorpora("query ids differ between corpora")
    counts = {"uplift": 0, "flat": 0, "downgrade": 0}
    for b in before:
        counts[classify_delta(b, after_by_id[b.query_id])] += 1
    n = len(before)
    return DeltaReport(
        n,
        pct(counts["uplift"], n),
        pct(counts["flat"], n),
        pct(counts["downgrade"], n),
        counts["uplift"],
        counts["flat"],
        counts["downgrade"],
    )


def format_table(rows: Sequence[tuple], deltas: Optional[Sequence] = None) -> str:
    """Aligned text table: ``rows`` are ``(label, MetricsReport)`` with optional matching ``DeltaReport``s."""
    header = ["Run"] + [title for _, title in MetricsReport.COLUMNS]
    if deltas is not None:
        header += ["Uplift", "Flat", "Downgrade"]
    body = []
    for i, (label, rep) in enumerate(rows):
        line = [label] + [f"{getattr(rep, key):.1f}" for key, _ in MetricsReport.COLUMNS]
        if deltas is not None:
            d = deltas[i]
            line += ["--"] * 3 if d is None else [f"{d.uplift_ratio:.1f}", f"{d.flat_ratio:.1f}", f"{d.downgrade_ratio:.1f}"]
        body.append(line)
    widths = [max(len(r[c]) for r in [header] + body) for c in range(len(header))]
    fmt = lambda r: "  ".join(s.ljust(w) if j == 0 else s.rjust(w) for j, (s, w) in enumerate(zip(r, widths)))  # noqa: E731
    return "\n".join([fmt(header), "  ".join("-" * w for w in widths)] + [fmt(r) for r in body])
