"""
Bayesian optimisation over the atomic-rule hypercube

Standard and quotient-aware runs differ only in the GP training set: the
quotient-aware run keeps one representative (the class elite) per detected
equivalence class of observed values.
"""

from typing import Dict, List, Optional, Tuple

import numpy as np

from .base import Optimizer, RunRecord
from .gp import expected_improvement, fit_gp
from ..core.cohort import Cohort
from ..core.config import BOConfig, ObjectiveConfig
from ..core.errors import ConfigError
from ..core.objective import Evaluation, RuleEvaluator, RuleSemantics, describe, subgroup_hash
from ..core.quotient import detect_classes
from ..core.rules import BitRule, RuleUniverse, subset_matrix


class BayesianOptimizer(Optimizer):
    """GP surrogate with the Hamming kernel and Expected Improvement"""

    def __init__(self, cohort: Cohort, universe: RuleUniverse, config: BOConfig,
                 objective: ObjectiveConfig,
                 semantics: RuleSemantics = RuleSemantics.ATOMIC,
                 evaluator: Optional[RuleEvaluator] = None):
        super().__init__()
        if config.budget < config.initial_design:
            raise ConfigError(f"BO budget {config.budget} is below the initial design size {config.initial_design}")
        self.cohort = cohort
        self.universe = universe
        self.config = config
        self.objective = objective
        self.semantics = semantics
        self.name = "bo-quotient" if config.quotient_aware else "bo"
        self.evaluator = evaluator or RuleEvaluator(cohort, objective, universe, semantics)

    def seed(self) -> Optional[int]:
        return self.config.seed

    def config_snapshot(self) -> Dict:
        snapshot = self.config.model_dump()
        snapshot["semantics"] = self.semantics.value
        return snapshot

    def _rule(self, row: np.ndarray) -> BitRule:
        return BitRule.from_bits(row.tolist())

    def _initial_design(self, rng: np.random.Generator, seen: Dict[bytes, int]) -> List[np.ndarray]:
        n = self.universe.n
        target = min(self.config.initial_design, 2 ** n - 1) if n < 63 else self.config.initial_design
        design: List[np.ndarray] = []
        while len(design) < target:
            row = rng.integers(0, 2, size=n).astype(np.uint8)
            key = row.tobytes()
            if not row.any() or key in seen:
                continue
            seen[key] = len(design)
            design.append(row)
        return design

    def _candidate_pool(self, rng: np.random.Generator, incumbent: np.ndarray,
                        seen: Dict[bytes, int]) -> np.ndarray:
        n = self.universe.n
        if n <= self.config.full_pool_max_bits:
            pool = subset_matrix(1, 2 ** n, n)
        else:
            half = self.config.pool_size // 2
            flips = rng.random((half, n)) < (2.0 / n)
            mutants = np.where(flips, 1 - incumbent[None, :], incumbent[None, :]).astype(np.uint8)
            randoms = rng.integers(0, 2, size=(self.config.pool_size - half, n)).astype(np.uint8)
            pool = np.unique(np.vstack([mutants, randoms]), axis=0)
            pool = pool[pool.any(axis=1)]
        keep = np.array([row.tobytes() not in seen for row in pool], dtype=bool)
        return pool[keep]

    def _training_set(self, X: np.ndarray, values: np.ndarray, feasible: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Targets for the GP: infeasible values sit one unit below the worst feasible value"""
        floor = float(values[feasible].min()) - 1.0 if feasible.any() else 0.0
        targets = np.where(feasible, values, floor)
        if not self.config.quotient_aware:
            return X, targets

        # BO never proposes the identity, so every observation is a valid vector
        classes = detect_classes(values, np.ones(values.size, dtype=bool), self.config.equivalence,
                                 feasible=feasible)
        if classes.skipped:
            return X, targets
        drop = np.zeros(values.size, dtype=bool)
        for members, elite in zip(classes.classes, classes.elites):
            drop[members] = True
            drop[elite] = False
        return X[~drop], targets[~drop]

    def search(self, record: RunRecord) -> None:
        config = self.config
        rng = np.random.default_rng(config.seed)
        seen: Dict[bytes, int] = {}

        rows = self._initial_design(rng, seen)
        evaluations: List[Evaluation] = [self.evaluator.evaluate(self._rule(r)) for r in rows]

        best_index = 0
        for i, e in enumerate(evaluations):
            if e.fitness > evaluations[best_index].fitness:
                best_index = i
            record.trace.append(self._trace_row(i, evaluations[best_index].fitness, None, None))

        while len(rows) < config.budget:
            X = np.vstack(rows)
            values = np.array([e.fitness for e in evaluations])
            feasible = np.array([e.feasible for e in evaluations])

            X_fit, y_fit = self._training_set(X, values, feasible)
            mu, sd = float(y_fit.mean()), float(y_fit.std())
            sd = sd if sd > 0 else 1.0
            state = fit_gp(X_fit, (y_fit - mu) / sd, config.theta0_grid, config.theta1_grid,
                           config.nugget_ratio, config.max_jitter_steps)

            pool = self._candidate_pool(rng, rows[best_index], seen)
            if pool.shape[0] == 0:
                break
            means, variances = state.predict(pool)
            incumbent = evaluations[best_index]
            f_star = (incumbent.fitness - mu) / sd if incumbent.feasible else float(((y_fit - mu) / sd).max())
            ei = expected_improvement(means, variances, f_star)
            choice = int(np.argmax(ei))

            row = pool[choice]
            seen[row.tobytes()] = len(rows)
            rows.append(row)
            evaluation = self.evaluator.evaluate(self._rule(row))
            evaluations.append(evaluation)
            if evaluation.fitness > evaluations[best_index].fitness:
                best_index = len(rows) - 1
            record.trace.append(self._trace_row(len(rows) - 1, evaluations[best_index].fitness,
                                                float(ei[choice]), state))

        best_rule = self._rule(rows[best_index])
        best_eval = evaluations[best_index]
        record.best_fitness = best_eval.fitness
        record.feasible = best_eval.feasible
        record.subgroup_size = best_eval.subgroup_size
        record.best_rule_bits = best_rule.to_string()
        record.best_rule_text = describe(best_rule, self.universe, self.semantics)
        record.subgroup_hash = subgroup_hash(self.evaluator.mask(best_rule))
        record.extra = {"evaluations": len(rows)}

    @staticmethod
    def _trace_row(iteration: int, incumbent: float, ei: Optional[float], state) -> Dict:
        return {
            "iteration": iteration,
            "best_fitness": float(incumbent),
            "ei": ei,
            "training_size": state.size if state is not None else None,
            "theta0": state.params.theta0 if state is not None else None,
            "theta1": state.params.theta1 if state is not None else None,
        }


def run_bo(cohort: Cohort, universe: RuleUniverse, config: BOConfig, objective: ObjectiveConfig,
           semantics: RuleSemantics = RuleSemantics.ATOMIC,
           evaluator: Optional[RuleEvaluator] = None) -> RunRecord:
    """One BO run; budget counts evaluations including the initial design"""
    return BayesianOptimizer(cohort, universe, config, objective, semantics, evaluator).run()
