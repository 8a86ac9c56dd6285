"""
Cohort data model, CSV ingestion and synthetic cohort generation
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .errors import (
    ConfigError,
    DataError,
    EmptyHVError,
    EmptyNonHVError,
    InfeasiblePlantError,
    MissingColumnError,
    NonPositiveBiomarkerError,
    UnknownLevelError,
)
from ..utils import derive_seed, sha256_bytes


RECORD_ID = "record_id"
IS_HV = "is_hv"
DEFAULT_BIOMARKER_RANGE = (0.5, 20.0)

_TRUE = {"true", "1", "yes"}
_FALSE = {"false", "0", "no"}


@dataclass(frozen=True)
class CategoricalField:
    name: str
    levels: Tuple[str, ...]


@dataclass(frozen=True)
class NumericField:
    name: str
    minimum: Optional[float] = None
    maximum: Optional[float] = None


@dataclass(frozen=True)
class Schema:
    """Categorical fields with ordered levels, numeric fields with ranges, one biomarker column"""
    categorical_fields: Tuple[CategoricalField, ...] = ()
    numeric_fields: Tuple[NumericField, ...] = ()
    biomarker_field: str = "biomarker"

    def __post_init__(self) -> None:
        names = self.field_names + [self.biomarker_field]
        if len(set(names)) != len(names):
            raise ConfigError(f"Schema field names must be unique: {names}")
        for f in self.categorical_fields:
            if len(f.levels) < 2 or len(set(f.levels)) != len(f.levels):
                raise ConfigError(f"Categorical field {f.name} needs at least 2 distinct levels")
        for f in self.numeric_fields:
            if f.minimum is not None and f.maximum is not None and f.minimum > f.maximum:
                raise ConfigError(f"Numeric field {f.name}: min > max")

    @property
    def field_names(self) -> List[str]:
        return [f.name for f in self.categorical_fields] + [f.name for f in self.numeric_fields]

    @property
    def is_degenerate(self) -> bool:
        return not self.categorical_fields and not self.numeric_fields

    def categorical_field(self, name: str) -> CategoricalField:
        for f in self.categorical_fields:
            if f.name == name:
                return f
        raise KeyError(name)

    def numeric_field(self, name: str) -> NumericField:
        for f in self.numeric_fields:
            if f.name == name:
                return f
        raise KeyError(name)

    def discrete(self) -> "Schema":
        """Same schema without numeric fields"""
        return Schema(self.categorical_fields, (), self.biomarker_field)


@dataclass(frozen=True)
class Record:
    id: str
    categorical: Dict[str, str]
    numeric: Dict[str, Optional[float]]
    biomarker: float
    is_hv: bool


@dataclass(frozen=True, eq=False)
class Cohort:
    """Immutable record set; columns are read-only numpy arrays"""
    schema: Schema
    record_ids: Tuple[str, ...]
    categorical: Dict[str, np.ndarray] = field(repr=False)
    numeric: Dict[str, np.ndarray] = field(repr=False)
    biomarker: np.ndarray = field(repr=False)
    hv_mask: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        arrays = list(self.categorical.values()) + list(self.numeric.values()) + [self.biomarker, self.hv_mask]
        for array in arrays:
            if len(array) != len(self.record_ids):
                raise DataError("Cohort columns have inconsistent lengths")
            array.setflags(write=False)
        if not self.hv_mask.any():
            raise EmptyHVError("Cohort has no healthy-volunteer records")
        if self.hv_mask.all():
            raise EmptyNonHVError("Cohort has no non-HV records")
        if not np.all(self.biomarker > 0) or not np.all(np.isfinite(self.biomarker)):
            raise NonPositiveBiomarkerError("Biomarker values must be finite and strictly positive")

    @property
    def size(self) -> int:
        return len(self.record_ids)

    def __len__(self) -> int:
        return self.size

    @property
    def non_hv_mask(self) -> np.ndarray:
        return ~self.hv_mask

    @property
    def non_hv_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.hv_mask)

    @property
    def hv_mean(self) -> float:
        return float(np.mean(self.biomarker[self.hv_mask]))

    def numeric_column(self, name: str) -> np.ndarray:
        return self.numeric[name]

    def categorical_codes(self, name: str) -> np.ndarray:
        return self.categorical[name]

    def record(self, index: int) -> Record:
        cat = {
            f.name: f.levels[int(self.categorical[f.name][index])]
            for f in self.schema.categorical_fields
        }
        num: Dict[str, Optional[float]] = {}
        for f in self.schema.numeric_fields:
            value = float(self.numeric[f.name][index])
            num[f.name] = None if np.isnan(value) else value
        return Record(self.record_ids[index], cat, num, float(self.biomarker[index]), bool(self.hv_mask[index]))

    @property
    def records(self) -> List[Record]:
        return [self.record(i) for i in range(self.size)]

    def with_biomarker(self, biomarker: np.ndarray) -> "Cohort":
        return Cohort(self.schema, self.record_ids, dict(self.categorical), dict(self.numeric),
                      np.array(biomarker, dtype=float), self.hv_mask.copy())

    def to_frame(self) -> pd.DataFrame:
        columns: Dict[str, object] = {
            RECORD_ID: list(self.record_ids),
            IS_HV: np.where(self.hv_mask, "true", "false"),
        }
        for f in self.schema.categorical_fields:
            columns[f.name] = np.asarray(f.levels, dtype=object)[self.categorical[f.name]]
        for f in self.schema.numeric_fields:
            columns[f.name] = self.numeric[f.name]
        columns[self.schema.biomarker_field] = self.biomarker
        return pd.DataFrame(columns)

    def to_csv_text(self) -> str:
        return self.to_frame().to_csv(index=False, na_rep="", lineterminator="\n")


def cohort_hash(cohort: Cohort) -> str:
    return sha256_bytes(cohort.to_csv_text().encode("utf-8"))


def write_csv(cohort: Cohort, path: Union[str, Path]) -> None:
    """UTF-8, comma separated, header row; missing numerics written empty"""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(cohort.to_csv_text())


def load_csv(path: Union[str, Path], schema: Schema) -> Cohort:
    """Load and validate a cohort file; row order is preserved

    Numeric fields without a declared range get the observed min/max.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"Dataset file not found: {path}")

    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    required = [RECORD_ID, IS_HV] + schema.field_names + [schema.biomarker_field]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise MissingColumnError(f"Missing column(s) in {path.name}: {', '.join(missing)}")

    hv_text = frame[IS_HV].str.strip().str.lower()
    bad_hv = ~hv_text.isin(_TRUE | _FALSE)
    if bad_hv.any():
        row = int(np.flatnonzero(bad_hv.to_numpy())[0]) + 2
        raise DataError(f"Invalid is_hv value on line {row}: {frame[IS_HV].iloc[row - 2]!r}")
    hv_mask = hv_text.isin(_TRUE).to_numpy()

    categorical: Dict[str, np.ndarray] = {}
    for f in schema.categorical_fields:
        lookup = {level: code for code, level in enumerate(f.levels)}
        values = frame[f.name].str.strip()
        unknown = sorted(set(values) - set(lookup))
        if unknown:
            raise UnknownLevelError(f"Unknown level(s) for {f.name}: {', '.join(unknown)}",
                                    detail=f"expected one of {list(f.levels)}")
        categorical[f.name] = values.map(lookup).to_numpy(dtype=np.int64)

    numeric: Dict[str, np.ndarray] = {}
    numeric_fields: List[NumericField] = []
    for f in schema.numeric_fields:
        raw = frame[f.name].str.strip()
        values = pd.to_numeric(raw.replace("", np.nan), errors="coerce").to_numpy(dtype=float)
        garbage = np.isnan(values) & (raw != "").to_numpy()
        if garbage.any():
            bad = raw.iloc[int(np.flatnonzero(garbage)[0])]
            raise DataError(f"Non-numeric value {bad!r} in numeric field {f.name}")
        if np.isinf(values).any():
            raise DataError(f"Numeric field {f.name} contains infinite values")
        numeric[f.name] = values
        finite = values[np.isfinite(values)]
        low = f.minimum if f.minimum is not None else (float(finite.min()) if finite.size else 0.0)
        high = f.maximum if f.maximum is not None else (float(finite.max()) if finite.size else 0.0)
        numeric_fields.append(NumericField(f.name, low, high))

    biomarker = pd.to_numeric(frame[schema.biomarker_field].str.strip(), errors="coerce").to_numpy(dtype=float)
    if np.isnan(biomarker).any():
        raise DataError(f"Biomarker column {schema.biomarker_field} has missing or non-numeric values")
    if np.any(biomarker <= 0):
        raise NonPositiveBiomarkerError(f"Biomarker column {schema.biomarker_field} has non-positive values")
    if not hv_mask.any():
        raise EmptyHVError(f"No is_hv=true rows in {path.name}")

    observed = Schema(schema.categorical_fields, tuple(numeric_fields), schema.biomarker_field)
    return Cohort(observed, tuple(frame[RECORD_ID].tolist()), categorical, numeric, biomarker, hv_mask)


def generate_synthetic(schema: Schema, n_records: int, hv_fraction: float, seed: int,
                       biomarker_range: Tuple[float, float] = DEFAULT_BIOMARKER_RANGE) -> Cohort:
    """Uniform categorical levels, uniform numerics, uniform positive biomarker

    A pure function of its arguments. If the draw leaves either the HV or the
    non-HV group empty, record 0 becomes HV or the last record non-HV.
    """
    if schema.is_degenerate:
        raise ConfigError("Cannot generate a cohort for a schema with no fields")
    if n_records < 2:
        raise ConfigError(f"n_records must be at least 2 (got {n_records})")
    if not 0 < hv_fraction < 1:
        raise ConfigError(f"hv_fraction must lie in (0, 1) (got {hv_fraction})")
    low, high = biomarker_range
    if not 0 < low <= high:
        raise ConfigError(f"Invalid biomarker range {biomarker_range}")
    for f in schema.numeric_fields:
        if f.minimum is None or f.maximum is None:
            raise ConfigError(f"Numeric field {f.name} needs a declared range for synthetic data")

    rng = np.random.default_rng(seed)
    hv_mask = rng.random(n_records) < hv_fraction
    if not hv_mask.any():
        hv_mask[0] = True
    if hv_mask.all():
        hv_mask[-1] = False

    categorical = {f.name: rng.integers(0, len(f.levels), size=n_records) for f in schema.categorical_fields}
    numeric = {f.name: rng.uniform(f.minimum, f.maximum, size=n_records) for f in schema.numeric_fields}
    biomarker = rng.uniform(low, high, size=n_records)

    record_ids = tuple(f"R{i:05d}" for i in range(n_records))
    return Cohort(schema, record_ids, categorical, numeric, biomarker, hv_mask)


def generate_planted_optimum(schema: Schema, n_records: int, seed: int, planted_rule: Iterable[int],
                             effect: float, hv_fraction: float = 0.2, min_subgroup_size: int = 10,
                             universe=None, max_retries: int = 20,
                             biomarker_range: Tuple[float, float] = DEFAULT_BIOMARKER_RANGE):
    """Synthetic cohort whose planted subgroup has its biomarker scaled by ``effect``

    Atom ids refer to ``universe`` (default: built from the schema's declared
    ranges). Attempt 0 uses ``seed`` itself, so with effect 1 the result equals
    ``generate_synthetic(schema, n_records, hv_fraction, seed)``.
    """
    from .objective import select_mask
    from .rules import build_universe, encode

    if effect <= 0:
        raise ConfigError(f"Plant effect must be positive (got {effect})")
    universe = universe or build_universe(schema)
    rule = encode(planted_rule, universe)

    for attempt in range(max_retries):
        attempt_seed = seed if attempt == 0 else derive_seed(seed, "plant-retry", attempt)
        cohort = generate_synthetic(schema, n_records, hv_fraction, attempt_seed, biomarker_range)
        mask = select_mask(rule, cohort, universe)
        if int(mask.sum()) >= min_subgroup_size:
            biomarker = np.array(cohort.biomarker, dtype=float)
            biomarker[mask] *= effect
            return cohort.with_biomarker(biomarker), rule

    raise InfeasiblePlantError(
        f"Planted rule selected fewer than {min_subgroup_size} records in {max_retries} attempts"
    )


def draw_plant(schema: Schema, universe, size: int, seed: int) -> List[int]:
    """Random plant: one level atom from each of ``size`` distinct categorical fields"""
    fields = list(schema.categorical_fields)
    if size > len(fields):
        raise ConfigError(f"Plant size {size} exceeds the {len(fields)} categorical fields")
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(len(fields), size=size, replace=False).tolist())
    atoms = []
    for index in chosen:
        f = fields[index]
        level = f.levels[int(rng.integers(0, len(f.levels)))]
        atoms.append(universe.find(f.name, level=level)[0].id)
    return sorted(atoms)


def compound_schema(field_names: Sequence[str] = ("MW", "LogP", "TPSA", "HBD")) -> Schema:
    """Numeric-only schema for synthetic compound libraries (screening demos)"""
    ranges = {"MW": (150.0, 700.0), "LogP": (-2.0, 7.0), "TPSA": (0.0, 200.0), "HBD": (0.0, 8.0)}
    fields = tuple(NumericField(name, *ranges.get(name, (0.0, 1.0))) for name in field_names)
    return Schema((CategoricalField("PAINS", ("no", "yes")),), fields, "affinity")
