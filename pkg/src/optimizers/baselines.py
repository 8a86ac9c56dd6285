"""
Baselines: greedy forward selection and the exhaustive oracle
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from .base import Optimizer, RunRecord
from ..core.cohort import Cohort, cohort_hash
from ..core.config import ObjectiveConfig
from ..core.errors import OracleCapError
from ..core.objective import RuleEvaluator, RuleSemantics, atom_masks, describe, subgroup_hash
from ..core.rules import BitRule, RuleUniverse, encode, subset_matrix, universe_hash
from ..utils import Logger, ensure_directory, sha256_bytes


DEFAULT_ORACLE_CAP = 20
CHUNK_SIZE = 4096


@dataclass
class ExhaustiveResult:
    best_rule: Optional[BitRule]
    best_fitness: float
    evaluated: int
    feasible: bool
    subgroup_size: int = 0
    best_rule_text: str = ""

    def to_dict(self) -> Dict:
        return {
            "best_rule": self.best_rule.to_string() if self.best_rule else None,
            "best_fitness": self.best_fitness,
            "evaluated": self.evaluated,
            "feasible": self.feasible,
            "subgroup_size": self.subgroup_size,
            "best_rule_text": self.best_rule_text,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "ExhaustiveResult":
        rule = BitRule.from_string(data["best_rule"]) if data.get("best_rule") else None
        return cls(rule, float(data["best_fitness"]), int(data["evaluated"]), bool(data["feasible"]),
                   int(data.get("subgroup_size", 0)), data.get("best_rule_text", ""))


class _ChunkScorer:
    """Vectorised fitness of all subsets whose codes fall in one index range"""

    def __init__(self, cohort: Cohort, universe: RuleUniverse, objective: ObjectiveConfig,
                 semantics: RuleSemantics):
        non_hv = cohort.non_hv_mask
        self.n = universe.n
        self.masks = atom_masks(cohort, universe)[:, non_hv].astype(np.float32)
        self.biomarker = cohort.biomarker[non_hv].astype(np.float64)
        self.hv_mean = cohort.hv_mean
        self.objective = objective
        self.semantics = semantics
        grouped = universe.categorical_groups() if semantics is RuleSemantics.LEVEL_SETS else []
        in_group = {i for g in grouped for i in g}
        self.groups = [np.array(g, dtype=np.int64) for g in grouped]
        self.plain = np.array([i for i in range(self.n) if i not in in_group], dtype=np.int64)

    def score(self, start: int, stop: int) -> Tuple[float, List[int]]:
        bits = subset_matrix(start, stop, self.n).astype(np.float32)
        selected = np.ones((bits.shape[0], self.masks.shape[1]), dtype=bool)
        if self.plain.size:
            fails = bits[:, self.plain] @ (1.0 - self.masks[self.plain])
            selected &= fails < 0.5
        for group in self.groups:
            active = bits[:, group].sum(axis=1) > 0
            hits = bits[:, group] @ self.masks[group] > 0.5
            selected &= (~active)[:, None] | hits

        sizes = selected.sum(axis=1)
        sums = selected.astype(np.float64) @ self.biomarker
        with np.errstate(divide="ignore", invalid="ignore"):
            fitness = np.where(
                (sizes >= self.objective.min_subgroup_size) & (sizes > 0),
                (sums / np.maximum(sizes, 1)) / self.hv_mean,
                self.objective.infeasible_fitness,
            )
        best = float(fitness.max())
        ties = (np.flatnonzero(fitness == best) + start).tolist()
        return best, ties


def _tie_key(code: int, n: int) -> Tuple[int, Tuple[int, ...]]:
    bits = tuple((code >> i) & 1 for i in range(n))
    return sum(bits), bits


def exhaustive_search(cohort: Cohort, universe: RuleUniverse, objective: ObjectiveConfig,
                      semantics: RuleSemantics = RuleSemantics.ATOMIC,
                      cap: int = DEFAULT_ORACLE_CAP, workers: int = 1,
                      chunk_size: int = CHUNK_SIZE) -> ExhaustiveResult:
    """Evaluate all 2^n - 1 non-identity rules

    Ties: highest fitness, then fewest set bits, then the smallest bit tuple
    (b0, b1, ...). Chunks may be scored in parallel; the reduction is ordered.
    """
    n = universe.n
    if n > cap:
        raise OracleCapError(f"Exhaustive search over {n} atoms exceeds the cap of {cap}",
                             detail="2^n rules would be enumerated")

    scorer = _ChunkScorer(cohort, universe, objective, semantics)
    total = 2 ** n
    ranges = [(start, min(start + chunk_size, total)) for start in range(1, total, chunk_size)]

    if workers > 1 and len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda r: scorer.score(*r), ranges))
    else:
        results = [scorer.score(*r) for r in ranges]

    best_fitness = max(best for best, _ in results)
    evaluated = total - 1
    if best_fitness <= objective.infeasible_fitness:
        return ExhaustiveResult(None, objective.infeasible_fitness, evaluated, False)

    ties = [code for best, codes in results if best == best_fitness for code in codes]
    code = min(ties, key=lambda c: _tie_key(c, n))
    rule = BitRule(code, n)
    evaluation = RuleEvaluator(cohort, objective, universe, semantics).evaluate(rule)
    return ExhaustiveResult(rule, evaluation.fitness, evaluated, evaluation.feasible,
                            evaluation.subgroup_size, describe(rule, universe, semantics))


class OracleCache:
    """Exhaustive results on disk keyed by (cohort, universe, objective, semantics)"""

    def __init__(self, directory: Path):
        self.directory = Path(directory)
        ensure_directory(str(self.directory))

    @staticmethod
    def key(cohort: Cohort, universe: RuleUniverse, objective: ObjectiveConfig,
            semantics: RuleSemantics) -> str:
        parts = [cohort_hash(cohort), universe_hash(universe),
                 json.dumps(objective.model_dump(), sort_keys=True), semantics.value]
        return sha256_bytes("|".join(parts).encode("utf-8"))

    def get_or_compute(self, cohort: Cohort, universe: RuleUniverse, objective: ObjectiveConfig,
                       semantics: RuleSemantics, cap: int = DEFAULT_ORACLE_CAP,
                       workers: int = 1) -> ExhaustiveResult:
        path = self.directory / f"{self.key(cohort, universe, objective, semantics)}.json"
        if path.exists():
            with open(path, "r", encoding="utf-8") as f:
                Logger.debug(f"Oracle cache hit: {path.name}")
                return ExhaustiveResult.from_dict(json.load(f))
        result = exhaustive_search(cohort, universe, objective, semantics, cap, workers)
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(result.to_dict(), f, sort_keys=True)
        tmp.replace(path)
        return result


class ExhaustiveSearch(Optimizer):
    """The oracle wrapped as an optimizer so that it can sit in a benchmark matrix"""

    name = "exhaustive"

    def __init__(self, cohort: Cohort, universe: RuleUniverse, objective: ObjectiveConfig,
                 semantics: RuleSemantics = RuleSemantics.ATOMIC, cap: int = DEFAULT_ORACLE_CAP,
                 workers: int = 1):
        super().__init__()
        self.cohort = cohort
        self.universe = universe
        self.objective = objective
        self.semantics = semantics
        self.cap = cap
        self.workers = workers

    def config_snapshot(self) -> Dict:
        return {"cap": self.cap, "semantics": self.semantics.value, **self.objective.model_dump()}

    def search(self, record: RunRecord) -> None:
        result = exhaustive_search(self.cohort, self.universe, self.objective, self.semantics,
                                   self.cap, self.workers)
        record.best_fitness = result.best_fitness
        record.feasible = result.feasible
        record.subgroup_size = result.subgroup_size
        record.extra = {"evaluated": result.evaluated}
        if result.best_rule is not None:
            record.best_rule_bits = result.best_rule.to_string()
            record.best_rule_text = result.best_rule_text
            evaluator = RuleEvaluator(self.cohort, self.objective, self.universe, self.semantics)
            record.subgroup_hash = subgroup_hash(evaluator.mask(result.best_rule))


class GreedySearch(Optimizer):
    """Forward selection from the identity rule; ties go to the lowest atom id"""

    name = "greedy"

    def __init__(self, cohort: Cohort, universe: RuleUniverse, objective: ObjectiveConfig,
                 semantics: RuleSemantics = RuleSemantics.ATOMIC,
                 evaluator: Optional[RuleEvaluator] = None):
        super().__init__()
        self.cohort = cohort
        self.universe = universe
        self.objective = objective
        self.semantics = semantics
        self.evaluator = evaluator or RuleEvaluator(cohort, objective, universe, semantics)

    def config_snapshot(self) -> Dict:
        return {"semantics": self.semantics.value, **self.objective.model_dump()}

    def search(self, record: RunRecord) -> None:
        n = self.universe.n
        current = BitRule.identity(n)
        current_eval = self.evaluator.evaluate(current)
        record.trace.append({"step": 0, "added": None, "best_fitness": current_eval.fitness})

        step = 0
        any_feasible_start = False
        while True:
            best_atom, best_eval = None, None
            for atom_id in range(n):
                if (current.value >> atom_id) & 1:
                    continue
                candidate = self.evaluator.evaluate(current | encode([atom_id], n))
                if step == 0 and candidate.feasible:
                    any_feasible_start = True
                if not candidate.feasible or candidate.fitness <= current_eval.fitness:
                    continue
                if best_eval is None or candidate.fitness > best_eval.fitness:
                    best_atom, best_eval = atom_id, candidate
            if best_atom is None:
                break
            step += 1
            current = current | encode([best_atom], n)
            current_eval = best_eval
            record.trace.append({"step": step, "added": best_atom, "best_fitness": current_eval.fitness})

        record.best_fitness = current_eval.fitness
        record.feasible = current_eval.feasible
        record.subgroup_size = current_eval.subgroup_size
        record.best_rule_bits = current.to_string()
        record.best_rule_text = describe(current, self.universe, self.semantics)
        record.subgroup_hash = subgroup_hash(self.evaluator.mask(current))
        record.extra = {"steps": step, "infeasible_start": not any_feasible_start}


def greedy_search(cohort: Cohort, universe: RuleUniverse, objective: ObjectiveConfig,
                  semantics: RuleSemantics = RuleSemantics.ATOMIC,
                  evaluator: Optional[RuleEvaluator] = None) -> RunRecord:
    return GreedySearch(cohort, universe, objective, semantics, evaluator).run()
