"""
Running an ordered filter pipeline over a compound table

Survivors depend only on the set of filters; the number of filter
evaluations (and so the realised cost) depends on their order.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Sequence

import numpy as np

from .cost import FilterProfile
from ..core.cohort import Cohort
from ..core.objective import atom_masks
from ..core.rules import AtomicRule, RuleUniverse


@dataclass(frozen=True)
class ScreeningFilter:
    profile: FilterProfile
    predicate: Callable[[Cohort], np.ndarray]

    @property
    def id(self):
        return self.profile.id


@dataclass
class PipelineResult:
    survivors: np.ndarray
    evaluations: Dict[str, int] = field(default_factory=dict)
    realised_cost: float = 0.0

    @property
    def total_evaluations(self) -> int:
        return sum(self.evaluations.values())

    def per_molecule_cost(self, n_compounds: int) -> float:
        return self.realised_cost / n_compounds if n_compounds else 0.0


def atom_filter(atom: AtomicRule, profile: FilterProfile) -> ScreeningFilter:
    """A filter that passes the compounds satisfying one atom"""
    single = RuleUniverse((replace(atom, id=0),))

    def predicate(cohort: Cohort) -> np.ndarray:
        return atom_masks(cohort, single)[0]

    return ScreeningFilter(profile, predicate)


def run_pipeline(compounds: Cohort, filters: Sequence[ScreeningFilter]) -> PipelineResult:
    """Apply filters in order; each filter only sees the compounds still alive"""
    alive = np.ones(compounds.size, dtype=bool)
    result = PipelineResult(survivors=np.empty(0, dtype=np.int64))
    for f in filters:
        seen = int(alive.sum())
        result.evaluations[str(f.id)] = seen
        result.realised_cost += seen * float(f.profile.cost)
        if seen:
            alive &= np.asarray(f.predicate(compounds), dtype=bool)
    result.survivors = np.flatnonzero(alive)
    return result

