"""
Rule application (the monoid action on cohorts) and the fold-change objective

Only non-HV records can be selected; HV records supply the denominator.
"""

import threading
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .cohort import Cohort
from .config import ObjectiveConfig
from .errors import EmptySubgroupError, UniverseMismatchError
from .rules import BitRule, PredicateKind, RuleUniverse, decode
from ..utils import sha256_bytes


RulePredicate = Callable[[Cohort], np.ndarray]


class RuleSemantics(str, Enum):
    """How set bits combine when a bit rule is applied

    ATOMIC: every set atom must hold (pure conjunction).
    LEVEL_SETS: set category atoms of one field are OR-ed, fields are AND-ed;
    numeric atoms stay conjunctive. This is what a GA level mask means.
    """
    ATOMIC = "atomic"
    LEVEL_SETS = "level-sets"


@dataclass(frozen=True)
class Evaluation:
    fitness: float
    subgroup_size: int
    feasible: bool


def atom_masks(cohort: Cohort, universe: RuleUniverse) -> np.ndarray:
    """(n atoms, n records) boolean matrix; missing numerics fail every numeric atom"""
    masks = np.zeros((universe.n, cohort.size), dtype=bool)
    schema = cohort.schema
    for atom in universe.atoms:
        if atom.kind is PredicateKind.EQ:
            try:
                levels = schema.categorical_field(atom.field_name).levels
            except KeyError:
                raise UniverseMismatchError(f"Atom field {atom.field_name} is not a categorical field of the cohort")
            if atom.level not in levels:
                raise UniverseMismatchError(f"Level {atom.level} is not a level of {atom.field_name}")
            masks[atom.id] = cohort.categorical_codes(atom.field_name) == levels.index(atom.level)
        else:
            if atom.field_name not in cohort.numeric:
                raise UniverseMismatchError(f"Atom field {atom.field_name} is not a numeric field of the cohort")
            values = cohort.numeric_column(atom.field_name)
            with np.errstate(invalid="ignore"):
                if atom.kind is PredicateKind.LE:
                    masks[atom.id] = values <= atom.threshold
                else:
                    masks[atom.id] = values > atom.threshold
    return masks


def _combine(rule: BitRule, masks: np.ndarray, groups: Dict[int, int],
             semantics: RuleSemantics) -> np.ndarray:
    selected = np.ones(masks.shape[1], dtype=bool)
    if semantics is RuleSemantics.ATOMIC:
        for atom_id in rule.conjuncts:
            selected &= masks[atom_id]
        return selected

    field_hits: Dict[int, np.ndarray] = {}
    for atom_id in rule.conjuncts:
        group = groups.get(atom_id)
        if group is None:
            selected &= masks[atom_id]
        elif group in field_hits:
            field_hits[group] |= masks[atom_id]
        else:
            field_hits[group] = masks[atom_id].copy()
    for hits in field_hits.values():
        selected &= hits
    return selected


def _group_index(universe: RuleUniverse) -> Dict[int, int]:
    return {atom_id: g for g, ids in enumerate(universe.categorical_groups()) for atom_id in ids}


def select_mask(rule: Union[BitRule, RulePredicate], cohort: Cohort,
                universe: Optional[RuleUniverse] = None,
                semantics: RuleSemantics = RuleSemantics.ATOMIC) -> np.ndarray:
    """Boolean mask over all records: non-HV records satisfying the rule"""
    if isinstance(rule, BitRule):
        if universe is None:
            raise UniverseMismatchError("Applying a bit rule needs its universe")
        if rule.n != universe.n:
            raise UniverseMismatchError(f"Rule length {rule.n} does not match universe size {universe.n}")
        selected = _combine(rule, atom_masks(cohort, universe), _group_index(universe), semantics)
    else:
        selected = np.asarray(rule(cohort), dtype=bool)
    return selected & cohort.non_hv_mask


def apply_rule(rule: Union[BitRule, RulePredicate], cohort: Cohort,
               universe: Optional[RuleUniverse] = None,
               semantics: RuleSemantics = RuleSemantics.ATOMIC) -> np.ndarray:
    """Sorted indices of the non-HV records selected by the rule"""
    return np.flatnonzero(select_mask(rule, cohort, universe, semantics))


def fold_change(subgroup: Sequence[int], cohort: Cohort) -> float:
    """Mean biomarker of the subgroup over the mean biomarker of the HV records"""
    indices = np.asarray(subgroup, dtype=np.int64)
    if indices.size == 0:
        raise EmptySubgroupError("Fold change is undefined for an empty subgroup")
    return float(np.mean(cohort.biomarker[indices])) / cohort.hv_mean


def evaluate_indices(indices: np.ndarray, cohort: Cohort, config: ObjectiveConfig) -> Evaluation:
    size = int(indices.size)
    if size < config.min_subgroup_size or size == 0:
        return Evaluation(config.infeasible_fitness, size, False)
    return Evaluation(fold_change(indices, cohort), size, True)


def evaluate(rule: Union[BitRule, RulePredicate], cohort: Cohort, config: ObjectiveConfig,
             universe: Optional[RuleUniverse] = None,
             semantics: RuleSemantics = RuleSemantics.ATOMIC) -> Evaluation:
    """Fold change when the subgroup is large enough, the infeasible sentinel otherwise"""
    return evaluate_indices(apply_rule(rule, cohort, universe, semantics), cohort, config)


def describe(rule: BitRule, universe: RuleUniverse,
             semantics: RuleSemantics = RuleSemantics.ATOMIC) -> str:
    """Rule text; under LEVEL_SETS several levels of one field read 'F in {a, b}'"""
    if semantics is RuleSemantics.ATOMIC or rule.is_identity:
        return decode(rule, universe)
    parts: List[str] = []
    seen = set()
    for atom_id in rule.conjuncts:
        atom = universe.atoms[atom_id]
        if not atom.is_categorical:
            parts.append(atom.describe())
            continue
        if atom.field_name in seen:
            continue
        seen.add(atom.field_name)
        levels = [universe.atoms[i].level for i in rule.conjuncts
                  if universe.atoms[i].is_categorical and universe.atoms[i].field_name == atom.field_name]
        if len(levels) == 1:
            parts.append(atom.describe())
        else:
            parts.append(f"{atom.field_name} in {{{', '.join(str(level) for level in levels)}}}")
    return " AND ".join(parts)


def subgroup_key(mask: np.ndarray) -> bytes:
    return np.packbits(mask).tobytes()


def subgroup_hash(mask: np.ndarray) -> str:
    return sha256_bytes(subgroup_key(mask))


class FitnessCache:
    """Memoised evaluations keyed by the induced subgroup bitmap (thread-safe)"""

    def __init__(self):
        self._store: Dict[bytes, Evaluation] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get_or_compute(self, key: bytes, compute: Callable[[], Evaluation]) -> Evaluation:
        with self._lock:
            cached = self._store.get(key)
            if cached is not None:
                self.hits += 1
                return cached
        value = compute()
        with self._lock:
            stored = self._store.setdefault(key, value)
            if stored is value:
                self.misses += 1
            else:
                self.hits += 1
            return stored

    def __len__(self) -> int:
        return len(self._store)


class RuleEvaluator:
    """Cohort + universe + objective with precomputed atom masks and a shared cache"""

    def __init__(self, cohort: Cohort, objective: ObjectiveConfig,
                 universe: Optional[RuleUniverse] = None,
                 semantics: RuleSemantics = RuleSemantics.ATOMIC,
                 cache: Optional[FitnessCache] = None):
        self.cohort = cohort
        self.objective = objective
        self.universe = universe
        self.semantics = semantics
        self.cache = cache if cache is not None else FitnessCache()
        self.masks = atom_masks(cohort, universe) if universe is not None else None
        self._groups = _group_index(universe) if universe is not None else {}
        self._non_hv = cohort.non_hv_mask

    def mask(self, rule: BitRule) -> np.ndarray:
        if self.masks is None or self.universe is None:
            raise UniverseMismatchError("This evaluator was built without a rule universe")
        if rule.n != self.universe.n:
            raise UniverseMismatchError(f"Rule length {rule.n} does not match universe size {self.universe.n}")
        return _combine(rule, self.masks, self._groups, self.semantics) & self._non_hv

    def evaluate_mask(self, mask: np.ndarray) -> Evaluation:
        mask = mask & self._non_hv
        return self.cache.get_or_compute(
            subgroup_key(mask),
            lambda: evaluate_indices(np.flatnonzero(mask), self.cohort, self.objective),
        )

    def evaluate(self, rule: BitRule) -> Evaluation:
        return self.evaluate_mask(self.mask(rule))

    def evaluate_many(self, rules: Sequence[BitRule]) -> List[Evaluation]:
        return [self.evaluate(rule) for rule in rules]
