import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent))

from aftkat.models import Dataset, SurvivalRecord
from aftkat.scenarios import ScenarioFactory
from aftkat.simgen import gen_dataset


def make_dataset(times, status, entry=None, Z=None, G=None, X=None, cause=1):
    n = len(times)
    entry = [0.0] * n if entry is None else entry
    records = tuple(
        SurvivalRecord(f"s{i + 1}", float(entry[i]), float(times[i]), int(status[i]))
        for i in range(n)
    )
    if G is None:
        G = np.arange(n, dtype=float).reshape(n, 1) % 3
    return Dataset(survival=records, Z=Z, G=G, X=X, cause_of_interest=cause)


@pytest.fixture
def three_subjects():
    """Uncensored cause-1 events at 1, 2, 3; no covariates."""
    return make_dataset([1.0, 2.0, 3.0], [1, 1, 1])


@pytest.fixture
def three_subjects_z():
    """Same events with a single covariate Z = (0, 1, 2)."""
    return make_dataset([1.0, 2.0, 3.0], [1, 1, 1], Z=np.array([[0.0], [1.0], [2.0]]))


@pytest.fixture(scope="session")
def null_dataset():
    scenario = ScenarioFactory.create("S1_no_het", n=400, p=10)
    return gen_dataset(scenario, np.random.default_rng(2024))
