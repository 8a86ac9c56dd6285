"""
Genetic algorithm over mixed categorical/numeric rules, standard and quotient-aware

Genome layout: numeric blocks [active, operator (0: <=, 1: >), threshold] and
categorical blocks [active, level bit x K]. Within an active categorical block
the selected levels are OR-ed; blocks are AND-ed. An active block with an
empty level mask decodes as inactive.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .base import Optimizer, RunRecord
from ..core.cohort import Cohort, Schema
from ..core.config import GAConfig, ObjectiveConfig
from ..core.objective import Evaluation, RuleEvaluator, subgroup_hash
from ..core.quotient import detect_classes
from ..core.rules import BitRule, PredicateKind, RuleUniverse, build_universe, encode
from ..utils import format_number


@dataclass(frozen=True)
class NumericBlock:
    field: str
    offset: int
    minimum: float
    maximum: float

    size = 3

    @property
    def span(self) -> float:
        return self.maximum - self.minimum


@dataclass(frozen=True)
class CategoricalBlock:
    field: str
    offset: int
    levels: Tuple[str, ...]

    @property
    def size(self) -> int:
        return 1 + len(self.levels)


Block = Union[NumericBlock, CategoricalBlock]


class ChromosomeLayout:
    """Gene positions for a schema: numeric blocks first, then categorical blocks"""

    def __init__(self, blocks: Sequence[Block]):
        self.blocks: Tuple[Block, ...] = tuple(blocks)
        self.n_genes = sum(b.size for b in self.blocks)
        self.boundaries = [b.offset for b in self.blocks[1:]]

        bit_positions: List[int] = []
        threshold_positions: List[int] = []
        for block in self.blocks:
            if isinstance(block, NumericBlock):
                bit_positions += [block.offset, block.offset + 1]
                threshold_positions.append(block.offset + 2)
            else:
                bit_positions += list(range(block.offset, block.offset + block.size))
        self.bit_positions = np.array(bit_positions, dtype=np.int64)
        self.threshold_positions = np.array(threshold_positions, dtype=np.int64)
        numeric = [b for b in self.blocks if isinstance(b, NumericBlock)]
        self.threshold_low = np.array([b.minimum for b in numeric], dtype=float)
        self.threshold_high = np.array([b.maximum for b in numeric], dtype=float)

    @classmethod
    def from_schema(cls, schema: Schema, include_numeric: bool = True) -> "ChromosomeLayout":
        blocks: List[Block] = []
        offset = 0
        if include_numeric:
            for f in schema.numeric_fields:
                low = 0.0 if f.minimum is None else float(f.minimum)
                high = low if f.maximum is None else float(f.maximum)
                blocks.append(NumericBlock(f.name, offset, low, high))
                offset += 3
        for f in schema.categorical_fields:
            block = CategoricalBlock(f.name, offset, tuple(f.levels))
            blocks.append(block)
            offset += block.size
        if not blocks:
            raise ValueError("Chromosome layout needs at least one field")
        return cls(blocks)

    @property
    def has_numeric(self) -> bool:
        return any(isinstance(b, NumericBlock) for b in self.blocks)

    def random_genes(self, rng: np.random.Generator, count: int) -> np.ndarray:
        genes = np.zeros((count, self.n_genes), dtype=float)
        genes[:, self.bit_positions] = rng.integers(0, 2, size=(count, self.bit_positions.size))
        if self.threshold_positions.size:
            genes[:, self.threshold_positions] = rng.uniform(
                self.threshold_low, self.threshold_high, size=(count, self.threshold_positions.size)
            )
        return genes

    def clamp(self, genes: np.ndarray) -> np.ndarray:
        if self.threshold_positions.size:
            genes[..., self.threshold_positions] = np.clip(
                genes[..., self.threshold_positions], self.threshold_low, self.threshold_high
            )
        return genes


@dataclass(frozen=True, eq=False)
class Chromosome:
    layout: ChromosomeLayout
    genes: np.ndarray

    def key(self) -> bytes:
        return np.ascontiguousarray(self.genes, dtype=float).tobytes()

    def active_levels(self, block: CategoricalBlock) -> List[int]:
        g = self.genes
        if g[block.offset] < 0.5:
            return []
        return [k for k in range(len(block.levels)) if g[block.offset + 1 + k] >= 0.5]

    def numeric_gene(self, block: NumericBlock) -> Optional[Tuple[PredicateKind, float]]:
        g = self.genes
        if g[block.offset] < 0.5:
            return None
        kind = PredicateKind.GT if g[block.offset + 1] >= 0.5 else PredicateKind.LE
        return kind, float(g[block.offset + 2])

    def is_valid(self) -> bool:
        g = self.genes
        if g.shape != (self.layout.n_genes,):
            return False
        bits = g[self.layout.bit_positions]
        if not np.all((bits == 0) | (bits == 1)):
            return False
        thresholds = g[self.layout.threshold_positions]
        return bool(np.all(thresholds >= self.layout.threshold_low) and np.all(thresholds <= self.layout.threshold_high))

    def describe(self) -> str:
        parts = []
        for block in self.layout.blocks:
            if isinstance(block, NumericBlock):
                gene = self.numeric_gene(block)
                if gene is not None:
                    op = ">" if gene[0] is PredicateKind.GT else "<="
                    parts.append(f"{block.field} {op} {format_number(gene[1])}")
            else:
                levels = self.active_levels(block)
                if len(levels) == 1:
                    parts.append(f"{block.field} = {block.levels[levels[0]]}")
                elif levels:
                    names = ", ".join(block.levels[k] for k in levels)
                    parts.append(f"{block.field} in {{{names}}}")
        return " AND ".join(parts) if parts else "TRUE (no filtering)"


def decode_mask(chromosome: Chromosome, cohort: Cohort) -> np.ndarray:
    """Records (HV included) satisfying the decoded rule"""
    selected = np.ones(cohort.size, dtype=bool)
    for block in chromosome.layout.blocks:
        if isinstance(block, NumericBlock):
            gene = chromosome.numeric_gene(block)
            if gene is None:
                continue
            values = cohort.numeric_column(block.field)
            with np.errstate(invalid="ignore"):
                selected &= (values > gene[1]) if gene[0] is PredicateKind.GT else (values <= gene[1])
        else:
            levels = chromosome.active_levels(block)
            if not levels:
                continue
            allowed = np.zeros(len(block.levels), dtype=bool)
            allowed[levels] = True
            selected &= allowed[cohort.categorical_codes(block.field)]
    return selected


def decode_to_rule(chromosome: Chromosome):
    """Executable predicate: cohort -> boolean mask over its records"""
    def predicate(cohort: Cohort) -> np.ndarray:
        return decode_mask(chromosome, cohort)
    predicate.__doc__ = chromosome.describe()
    return predicate


def _nearest_atom(universe: RuleUniverse, field: str, kind: PredicateKind, threshold: float) -> Optional[int]:
    candidates = universe.find(field, kind=kind)
    if not candidates:
        return None
    best = min(candidates, key=lambda a: (abs(a.threshold - threshold), a.threshold))
    return best.id


def to_atomic_vector(chromosome: Chromosome, universe: RuleUniverse) -> BitRule:
    """Project onto the discrete universe: level atoms and nearest grid thresholds"""
    ids: List[int] = []
    for block in chromosome.layout.blocks:
        if isinstance(block, NumericBlock):
            gene = chromosome.numeric_gene(block)
            if gene is not None:
                atom_id = _nearest_atom(universe, block.field, gene[0], gene[1])
                if atom_id is not None:
                    ids.append(atom_id)
        else:
            for k in chromosome.active_levels(block):
                matches = universe.find(block.field, level=block.levels[k])
                if matches:
                    ids.append(matches[0].id)
    return encode(ids, universe)


class GeneticAlgorithm(Optimizer):
    """Algorithm with an optional quotient step: periodic class detection and elite injection"""

    def __init__(self, cohort: Cohort, config: GAConfig, objective: ObjectiveConfig,
                 universe: Optional[RuleUniverse] = None,
                 evaluator: Optional[RuleEvaluator] = None):
        super().__init__()
        self.cohort = cohort
        self.config = config
        self.objective = objective
        self.name = "ga-quotient" if config.quotient_aware else "ga"
        self.layout = ChromosomeLayout.from_schema(cohort.schema, config.include_numeric)
        schema = cohort.schema if config.include_numeric else cohort.schema.discrete()
        self.universe = universe or build_universe(schema, cohort)
        self.evaluator = evaluator or RuleEvaluator(cohort, objective)

    def seed(self) -> Optional[int]:
        return self.config.seed

    def config_snapshot(self) -> Dict:
        return self.config.model_dump()

    def chromosome(self, genes: np.ndarray) -> Chromosome:
        return Chromosome(self.layout, genes)

    def _evaluate(self, population: np.ndarray) -> List[Evaluation]:
        return [self.evaluator.evaluate_mask(decode_mask(self.chromosome(g), self.cohort)) for g in population]

    def _tournament(self, fitness: np.ndarray, rng: np.random.Generator) -> int:
        picks = rng.integers(0, fitness.size, size=self.config.tournament_size)
        return int(picks[int(np.argmax(fitness[picks]))])

    def _mutate(self, genes: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        layout = self.layout
        flips = rng.random(layout.n_genes) < self.config.mutation_prob
        bits = layout.bit_positions[flips[layout.bit_positions]]
        genes[bits] = 1.0 - genes[bits]
        if layout.threshold_positions.size:
            noise = rng.normal(0.0, 1.0, size=layout.threshold_positions.size)
            moved = flips[layout.threshold_positions]
            sigma = self.config.threshold_sigma * (layout.threshold_high - layout.threshold_low)
            genes[layout.threshold_positions] += np.where(moved, noise * sigma, 0.0)
        return layout.clamp(genes)

    def _crossover(self, a: np.ndarray, b: np.ndarray,
                   rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Single-point crossover; the cut always falls between two blocks"""
        boundaries = self.layout.boundaries
        if rng.random() < self.config.crossover_prob and boundaries:
            cut = boundaries[int(rng.integers(0, len(boundaries)))]
            return np.concatenate([a[:cut], b[cut:]]), np.concatenate([b[:cut], a[cut:]])
        return a.copy(), b.copy()

    def _offspring(self, population: np.ndarray, fitness: np.ndarray, count: int,
                   rng: np.random.Generator) -> List[np.ndarray]:
        children: List[np.ndarray] = []
        while len(children) < count:
            a = population[self._tournament(fitness, rng)]
            b = population[self._tournament(fitness, rng)]
            c1, c2 = self._crossover(a, b, rng)
            children.append(self._mutate(c1, rng))
            if len(children) < count:
                children.append(self._mutate(c2, rng))
        return children

    def _select_elites(self, population: np.ndarray, fitness: np.ndarray,
                       indices: Sequence[int]) -> List[Tuple[np.ndarray, float]]:
        unique: Dict[bytes, Tuple[np.ndarray, float]] = {}
        for i in indices:
            genes = population[i]
            unique.setdefault(genes.tobytes(), (genes.copy(), float(fitness[i])))
        elites = list(unique.values())
        if len(elites) > self.config.population_size:
            order = sorted(range(len(elites)), key=lambda k: -elites[k][1])
            elites = [elites[k] for k in sorted(order[: self.config.population_size])]
        return elites

    def search(self, record: RunRecord) -> None:
        config = self.config
        rng = np.random.default_rng(config.seed)
        n = config.population_size

        population = self.layout.random_genes(rng, n)
        evaluations = self._evaluate(population)
        fitness = np.array([e.fitness for e in evaluations])

        best_index = int(np.argmax(fitness))
        best_genes, best_eval = population[best_index].copy(), evaluations[best_index]
        elites: List[Tuple[np.ndarray, float]] = []
        record.trace.append(self._trace_row(0, best_eval.fitness, fitness, evaluations, None, 0))

        for t in range(1, config.generations + 1):
            class_count = None
            if config.quotient_aware and (t == 1 or t % config.equivalence.tau == 0):
                vectors = [to_atomic_vector(self.chromosome(g), self.universe) for g in population]
                classes = detect_classes(
                    fitness,
                    [not v.is_identity for v in vectors],
                    config.equivalence,
                    feasible=[e.feasible for e in evaluations],
                )
                if not classes.skipped:
                    elites = self._select_elites(population, fitness, classes.elites)
                    class_count = classes.count
                    for summary in classes.summaries(fitness):
                        summary["generation"] = t
                        summary["elite_rule"] = self.chromosome(population[summary["elite"]]).describe()
                        record.classes.append(summary)

            injected = [genes.copy() for genes, _ in elites] if config.quotient_aware else []
            children = self._offspring(population, fitness, n - len(injected), rng)
            population = np.vstack(injected + children)
            evaluations = self._evaluate(population)
            fitness = np.array([e.fitness for e in evaluations])

            gen_best = int(np.argmax(fitness))
            if fitness[gen_best] > best_eval.fitness:
                best_genes, best_eval = population[gen_best].copy(), evaluations[gen_best]
            record.trace.append(self._trace_row(t, best_eval.fitness, fitness, evaluations,
                                                class_count, len(injected)))

        best = self.chromosome(best_genes)
        mask = decode_mask(best, self.cohort) & self.cohort.non_hv_mask
        record.best_fitness = best_eval.fitness
        record.feasible = best_eval.feasible
        record.subgroup_size = best_eval.subgroup_size
        record.best_rule_text = best.describe()
        record.best_rule_bits = to_atomic_vector(best, self.universe).to_string()
        record.subgroup_hash = subgroup_hash(mask)
        record.extra = {
            "evaluations": (config.generations + 1) * n,
            "cache_hits": self.evaluator.cache.hits,
            "best_genes": best_genes.tolist(),
        }

    @staticmethod
    def _trace_row(generation: int, best: float, fitness: np.ndarray, evaluations: List[Evaluation],
                   class_count: Optional[int], elite_count: int) -> Dict:
        feasible = np.array([e.feasible for e in evaluations])
        return {
            "generation": generation,
            "best_fitness": float(best),
            "generation_best": float(fitness.max()),
            "mean_fitness": float(fitness[feasible].mean()) if feasible.any() else None,
            "feasible": int(feasible.sum()),
            "class_count": class_count,
            "elite_count": elite_count,
        }


def run_ga(cohort: Cohort, config: GAConfig, objective: ObjectiveConfig,
           universe: Optional[RuleUniverse] = None,
           evaluator: Optional[RuleEvaluator] = None) -> RunRecord:
    """One GA run; deterministic for a fixed config.seed"""
    return GeneticAlgorithm(cohort, config, objective, universe, evaluator).run()
