"""
Test helpers: example schemas and cohorts built from literal rows
"""

from typing import Dict, List, Sequence, Tuple

import numpy as np

from src.core.cohort import CategoricalField, Cohort, NumericField, Schema


DED_LEVELS = ("healthy", "mild", "moderate", "severe")


def example_schema(numeric: Sequence[NumericField] = ()) -> Schema:
    """DED, Gender and MGD: eight category atoms in id order"""
    return Schema(
        categorical_fields=(
            CategoricalField("DED", DED_LEVELS),
            CategoricalField("Gender", ("male", "female")),
            CategoricalField("MGD", ("absent", "present")),
        ),
        numeric_fields=tuple(numeric),
    )


Row = Tuple[bool, Dict[str, object], float]


def cohort_from_rows(schema: Schema, rows: List[Row]) -> Cohort:
    """Build a cohort from (is_hv, field values, biomarker) tuples"""
    categorical = {
        f.name: np.array([f.levels.index(values[f.name]) for _, values, _ in rows], dtype=np.int64)
        for f in schema.categorical_fields
    }
    numeric = {
        f.name: np.array([np.nan if values.get(f.name) is None else float(values[f.name]) for _, values, _ in rows])
        for f in schema.numeric_fields
    }
    return Cohort(
        schema,
        tuple(f"R{i:03d}" for i in range(len(rows))),
        categorical,
        numeric,
        np.array([b for _, _, b in rows], dtype=float),
        np.array([hv for hv, _, _ in rows], dtype=bool),
    )


def uniform_rows(schema: Schema, n_non_hv: int, biomarker: float = 1.0, n_hv: int = 1,
                 hv_biomarker: float = 1.0, seed: int = 0) -> List[Row]:
    rng = np.random.default_rng(seed)
    rows: List[Row] = []
    for i in range(n_hv + n_non_hv):
        values: Dict[str, object] = {f.name: f.levels[int(rng.integers(0, len(f.levels)))]
                                     for f in schema.categorical_fields}
        for f in schema.numeric_fields:
            values[f.name] = float(rng.uniform(f.minimum, f.maximum))
        rows.append((i < n_hv, values, hv_biomarker if i < n_hv else biomarker))
    return rows


def mixed_schema() -> Schema:
    return example_schema((NumericField("OSDI", 0.0, 100.0), NumericField("TBUT", 0.0, 30.0)))
