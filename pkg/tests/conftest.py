"""Shared fixtures."""

import json
from pathlib import Path

import numpy as np
import pytest

from services.settings import reset_settings

DATA_DIR = Path(__file__).parent.parent / "data" / "manual"


def load(name: str) -> dict:
    return json.loads((DATA_DIR / f"{name}.json").read_text())


@pytest.fixture
def triply_punctured() -> dict:
    return load("triply_punctured")


@pytest.fixture
def disconnected_levels() -> dict:
    return load("disconnected_levels")


@pytest.fixture
def two_cusps() -> dict:
    return load("two_cusps")


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(42)


@pytest.fixture(autouse=True)
def fresh_settings(monkeypatch):
    for key in ("ISOPROFILE_THREADS", "ISOPROFILE_OUTPUT_DIR", "ISOPROFILE_RTOL", "ISOPROFILE_ATOL", "ISOPROFILE_SEED"):
        monkeypatch.delenv(key, raising=False)
    reset_settings()
    yield
    reset_settings()
