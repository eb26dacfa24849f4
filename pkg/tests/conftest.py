from __future__ import annotations

from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

from planloop.codec import parse_plan
from planloop.ingest import load_split, load_split_dir

FIXTURES = Path(__file__).parent / "fixtures"
SAMPLES = FIXTURES / "samples"

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def sample(name: str) -> str:
    return (SAMPLES / name).read_text(encoding="utf-8")


@pytest.fixture(scope="session")
def train_split():
    return load_split_dir("train", FIXTURES / "train")


@pytest.fixture(scope="session")
def val_split():
    return load_split_dir("validation", FIXTURES / "validation")


@pytest.fixture(scope="session")
def seattle():
    """``(query, reference, plan)`` for the hand-built Seattle -> San Francisco sandbox."""
    d = FIXTURES / "seattle_sf"
    rec = load_split("validation", d / "queries.jsonl", d / "reference").records[0]
    plan, diag = parse_plan(sample("seattle_sf_plan.txt"), 3)
    assert plan is not None, diag.fatal
    return rec.query, rec.reference, plan
