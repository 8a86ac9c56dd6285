"""
Expected per-molecule cost of an ordered filter pipeline and the c/s ordering rule

E[cost] = c1 + (1 - s1) c2 + (1 - s1)(1 - s2) c3 + ...

The arithmetic is plain Python so that ``fractions.Fraction`` inputs stay exact.
"""

import itertools
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, List, Sequence, Tuple, Union

import pandas as pd

from ..core.errors import ConfigError, DataError, MissingColumnError


BRUTE_FORCE_LIMIT = 10
FILTER_COLUMNS = ("id", "cost", "selectivity")


@dataclass(frozen=True)
class FilterProfile:
    """Per-molecule cost and selectivity (fraction removed) of one filter"""
    id: Any
    cost: Any
    selectivity: Any

    def __post_init__(self) -> None:
        if not self.cost > 0 or not math.isfinite(float(self.cost)):
            raise ValueError(f"Filter {self.id}: cost must be a positive finite number (got {self.cost})")
        if not 0 <= self.selectivity <= 1:
            raise ValueError(f"Filter {self.id}: selectivity must lie in [0, 1] (got {self.selectivity})")

    @property
    def ratio(self) -> float:
        """c/s; infinite for a filter that removes nothing"""
        return self.cost / self.selectivity if self.selectivity > 0 else math.inf


def expected_cost(pipeline: Sequence[FilterProfile]):
    """Telescoping sum over the pipeline; an empty pipeline costs 0"""
    total = 0
    survival = 1
    for f in pipeline:
        total += survival * f.cost
        survival *= 1 - f.selectivity
    return total


def _order_key(f: FilterProfile) -> Tuple:
    if f.selectivity > 0:
        return (0, f.cost / f.selectivity, f.id)
    return (1, f.cost, f.id)


def optimal_order(filters: Sequence[FilterProfile]) -> List[FilterProfile]:
    """Ascending c/s; filters with s = 0 go last by ascending cost; ties by lower id"""
    ids = [f.id for f in filters]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"Filter ids must be unique: {ids}")
    return sorted(filters, key=_order_key)


def brute_force_order(filters: Sequence[FilterProfile]) -> Tuple[List[FilterProfile], Any]:
    """Cheapest permutation by enumeration (first one found on exact ties)"""
    if len(filters) > BRUTE_FORCE_LIMIT:
        raise ConfigError(f"Brute-force ordering is limited to {BRUTE_FORCE_LIMIT} filters (got {len(filters)})")
    if not filters:
        return [], 0
    best_perm, best_cost = None, None
    for perm in itertools.permutations(filters):
        cost = expected_cost(perm)
        if best_cost is None or cost < best_cost:
            best_perm, best_cost = list(perm), cost
    return best_perm, best_cost


def read_filters(path: Union[str, Path]) -> List[FilterProfile]:
    """Filter profiles from a CSV with columns id, cost, selectivity"""
    path = Path(path)
    if not path.exists():
        raise DataError(f"Filter file not found: {path}")
    frame = pd.read_csv(path, dtype={"id": str}, encoding="utf-8")
    missing = [c for c in FILTER_COLUMNS if c not in frame.columns]
    if missing:
        raise MissingColumnError(f"Missing column(s) in {path.name}: {', '.join(missing)}")
    if frame.empty:
        raise DataError(f"No filters in {path.name}")

    filters = []
    for row in frame.itertuples(index=False):
        try:
            filters.append(FilterProfile(str(row.id), float(row.cost), float(row.selectivity)))
        except (TypeError, ValueError) as e:
            raise DataError(f"Invalid filter row in {path.name}", detail=str(e))
    if len({f.id for f in filters}) != len(filters):
        raise DataError(f"Duplicate filter ids in {path.name}")
    return filters


def order_frame(order: Sequence[FilterProfile]) -> pd.DataFrame:
    """One row per position: survival before the filter and the running expected cost"""
    rows = []
    survival, running = 1.0, 0.0
    for position, f in enumerate(order, start=1):
        running += survival * float(f.cost)
        rows.append({
            "position": position,
            "id": f.id,
            "cost": float(f.cost),
            "selectivity": float(f.selectivity),
            "ratio": float(f.ratio),
            "survival_in": survival,
            "cumulative_cost": running,
        })
        survival *= 1.0 - float(f.selectivity)
    return pd.DataFrame(rows, columns=["position", "id", "cost", "selectivity", "ratio",
                                       "survival_in", "cumulative_cost"])


def write_order(order: Sequence[FilterProfile], path: Union[str, Path, None] = None) -> str:
    """CSV of the ordered pipeline; written to ``path`` when given, returned as text"""
    text = order_frame(order).to_csv(index=False, lineterminator="\n")
    if path is not None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    return text
