"""
Shared fixtures: the dry-eye example universe and small hand-built cohorts
"""

from typing import List, Tuple

import numpy as np
import pytest

from helpers import Row, cohort_from_rows, example_schema
from src.core.cohort import Cohort, generate_planted_optimum
from src.core.config import ObjectiveConfig
from src.core.rules import BitRule, build_universe


@pytest.fixture
def schema():
    return example_schema()


@pytest.fixture
def universe(schema):
    return build_universe(schema)


@pytest.fixture
def objective() -> ObjectiveConfig:
    return ObjectiveConfig(min_subgroup_size=10)


@pytest.fixture
def random_cohort(schema) -> Cohort:
    """300 records, a third of them HV, biomarker uniform in [1, 10]"""
    rng = np.random.default_rng(11)
    rows: List[Row] = []
    for i in range(300):
        values = {f.name: f.levels[int(rng.integers(0, len(f.levels)))] for f in schema.categorical_fields}
        rows.append((i % 3 == 0, values, float(rng.uniform(1.0, 10.0))))
    return cohort_from_rows(schema, rows)


@pytest.fixture
def planted(schema, universe) -> Tuple[Cohort, BitRule]:
    """500 records with 'DED = moderate AND MGD = present' scaled by 10"""
    atoms = universe.ids_from_labels(["DED=moderate", "MGD=present"])
    return generate_planted_optimum(schema, 500, seed=3, planted_rule=atoms, effect=10.0,
                                    hv_fraction=0.2, min_subgroup_size=10, universe=universe)
