"""
Tests for the chromosome encoding and the standard / quotient-aware genetic algorithm
"""

import json

import numpy as np
import pandas as pd
import pytest

from helpers import cohort_from_rows, example_schema, mixed_schema, uniform_rows
from src.core.bench import BenchmarkRunner
from src.core.cohort import NumericField, generate_synthetic
from src.core.config import (
    BenchmarkConfig,
    EquivalenceConfig,
    GAConfig,
    ObjectiveConfig,
    ParamRanges,
    PlantConfig,
)
from src.core.objective import RuleEvaluator, RuleSemantics
from src.core.rules import RuleUniverse, build_universe, numeric_gt, numeric_le
from src.optimizers.baselines import exhaustive_search
from src.optimizers.ga import (
    CategoricalBlock,
    Chromosome,
    ChromosomeLayout,
    GeneticAlgorithm,
    NumericBlock,
    decode_mask,
    decode_to_rule,
    run_ga,
    to_atomic_vector,
)


def genes_for(layout, **blocks):
    """Gene vector with the named blocks set; everything else inactive"""
    genes = np.zeros(layout.n_genes)
    by_field = {b.field: b for b in layout.blocks}
    for field, value in blocks.items():
        block = by_field[field]
        genes[block.offset] = 1.0
        if isinstance(block, NumericBlock):
            op, threshold = value
            genes[block.offset + 1] = 1.0 if op == ">" else 0.0
            genes[block.offset + 2] = threshold
        else:
            for level in value:
                genes[block.offset + 1 + block.levels.index(level)] = 1.0
    return genes


def osdi_schema():
    return example_schema((NumericField("OSDI", 0.0, 100.0),))


class TestLayout:
    def test_numeric_blocks_first(self):
        layout = ChromosomeLayout.from_schema(mixed_schema())
        assert [type(b) for b in layout.blocks] == [NumericBlock, NumericBlock, CategoricalBlock,
                                                    CategoricalBlock, CategoricalBlock]
        assert [b.offset for b in layout.blocks] == [0, 3, 6, 11, 14]
        assert layout.n_genes == 17
        assert layout.boundaries == [3, 6, 11, 14]

    def test_discrete_layout(self):
        layout = ChromosomeLayout.from_schema(mixed_schema(), include_numeric=False)
        assert not layout.has_numeric
        assert layout.n_genes == 5 + 3 + 3

    def test_random_genes_are_valid(self):
        layout = ChromosomeLayout.from_schema(mixed_schema())
        population = layout.random_genes(np.random.default_rng(0), 40)
        assert all(Chromosome(layout, g).is_valid() for g in population)


class TestAtomicVector:
    def test_inactive_chromosome_is_identity(self, universe):
        layout = ChromosomeLayout.from_schema(example_schema())
        assert to_atomic_vector(Chromosome(layout, np.zeros(layout.n_genes)), universe).is_identity

    def test_female_sets_bit_five(self, universe):
        layout = ChromosomeLayout.from_schema(example_schema())
        vector = to_atomic_vector(Chromosome(layout, genes_for(layout, Gender=["female"])), universe)
        assert vector.to_string() == "00000100"

    def test_level_mask_sets_one_bit_per_level(self, universe):
        layout = ChromosomeLayout.from_schema(example_schema())
        genes = genes_for(layout, DED=["mild", "moderate"], MGD=["present"])
        assert to_atomic_vector(Chromosome(layout, genes), universe).conjuncts == (1, 2, 7)

    def test_threshold_snaps_to_nearest_grid_point(self, universe):
        atoms = list(universe.atoms)
        for t in (10.0, 12.0, 14.0):
            atoms.append(numeric_le(len(atoms), "OSDI", t))
            atoms.append(numeric_gt(len(atoms), "OSDI", t))
        grid = RuleUniverse(tuple(atoms))
        layout = ChromosomeLayout.from_schema(osdi_schema())
        vector = to_atomic_vector(Chromosome(layout, genes_for(layout, OSDI=(">", 12.3))), grid)
        (atom_id,) = vector.conjuncts
        assert grid[atom_id].describe() == "OSDI > 12"

        thresholds = np.array([10.0, 12.0, 14.0])
        for value in np.linspace(9.0, 15.0, 25):
            vector = to_atomic_vector(Chromosome(layout, genes_for(layout, OSDI=("<=", value))), grid)
            expected = thresholds[int(np.argmin(np.abs(thresholds - value)))]
            assert grid[vector.conjuncts[0]].threshold == expected


class TestDecode:
    def cohort(self):
        return generate_synthetic(osdi_schema(), 200, 0.2, seed=4)

    def test_numeric_block(self):
        cohort = self.cohort()
        layout = ChromosomeLayout.from_schema(osdi_schema())
        mask = decode_mask(Chromosome(layout, genes_for(layout, OSDI=(">", 12.0))), cohort)
        np.testing.assert_array_equal(mask, cohort.numeric_column("OSDI") > 12.0)

    def test_level_mask_is_a_disjunction(self):
        cohort = self.cohort()
        layout = ChromosomeLayout.from_schema(osdi_schema())
        chromosome = Chromosome(layout, genes_for(layout, DED=["mild", "moderate"]))
        codes = cohort.categorical_codes("DED")
        np.testing.assert_array_equal(decode_mask(chromosome, cohort), (codes == 1) | (codes == 2))
        assert chromosome.describe() == "DED in {mild, moderate}"

    def test_inactive_chromosome_selects_everything(self):
        cohort = self.cohort()
        layout = ChromosomeLayout.from_schema(osdi_schema())
        predicate = decode_to_rule(Chromosome(layout, np.zeros(layout.n_genes)))
        assert predicate(cohort).all()
        assert predicate.__doc__ == "TRUE (no filtering)"

    def test_active_block_with_empty_mask_is_inactive(self):
        cohort = self.cohort()
        layout = ChromosomeLayout.from_schema(osdi_schema())
        genes = np.zeros(layout.n_genes)
        genes[layout.blocks[1].offset] = 1.0
        assert decode_mask(Chromosome(layout, genes), cohort).all()

    def test_matches_level_sets_application(self, universe, random_cohort):
        layout = ChromosomeLayout.from_schema(example_schema())
        evaluator = RuleEvaluator(random_cohort, ObjectiveConfig(), universe, RuleSemantics.LEVEL_SETS)
        for genes in layout.random_genes(np.random.default_rng(8), 50):
            chromosome = Chromosome(layout, genes)
            expected = evaluator.mask(to_atomic_vector(chromosome, universe))
            actual = decode_mask(chromosome, random_cohort) & random_cohort.non_hv_mask
            np.testing.assert_array_equal(actual, expected)


class TestGeneticAlgorithm:
    def test_tiny_run_is_reproducible(self, random_cohort, objective):
        config = GAConfig(population_size=2, generations=1, seed=42)
        first = run_ga(random_cohort, config, objective)
        second = run_ga(random_cohort, config, objective)
        assert first.best_fitness == second.best_fitness
        assert first.trace == second.trace

    def test_best_ever_is_monotone(self, planted, objective):
        cohort, _ = planted
        record = run_ga(cohort, GAConfig(population_size=20, generations=15, seed=1), objective)
        trace = record.best_trace()
        assert len(trace) == 16
        assert all(b >= a for a, b in zip(trace, trace[1:]))
        assert record.best_fitness == trace[-1]
        assert record.extra["evaluations"] == 16 * 20

    def test_best_genes_are_well_formed(self):
        cohort = generate_synthetic(mixed_schema(), 300, 0.2, seed=2)
        config = GAConfig(population_size=20, generations=10, mutation_prob=0.5, seed=3)
        record = run_ga(cohort, config, ObjectiveConfig(min_subgroup_size=5))
        layout = ChromosomeLayout.from_schema(mixed_schema())
        assert Chromosome(layout, np.array(record.extra["best_genes"])).is_valid()
        assert len(record.best_rule_bits) == build_universe(cohort.schema, cohort).n

    def test_standard_mode_ignores_equivalence_settings(self, planted, objective):
        cohort, _ = planted
        a = GAConfig(population_size=15, generations=12, seed=9)
        b = a.model_copy(update={"equivalence": EquivalenceConfig(epsilon=0.5, min_pts=4, tau=2)})
        first, second = run_ga(cohort, a, objective), run_ga(cohort, b, objective)
        for record in (first, second):
            record.config = {}
            record.wall_time = 0.0
            record.extra.pop("cache_hits")
        assert json.dumps(first.to_dict(), sort_keys=True) == json.dumps(second.to_dict(), sort_keys=True)
        assert first.classes == []

    def test_class_detection_schedule(self, planted, objective):
        cohort, _ = planted
        config = GAConfig(population_size=30, generations=25, quotient_aware=True,
                          equivalence=EquivalenceConfig(epsilon=0.1, min_pts=3, tau=10), seed=4)
        record = run_ga(cohort, config, objective)
        assert record.method == "ga-quotient"
        detected = {row["generation"] for row in record.trace if row["class_count"] is not None}
        assert detected and detected <= {1, 10, 20}
        assert {row["generation"] for row in record.classes} <= detected
        assert all(row["elite_count"] == 0 for row in record.trace if row["generation"] < min(detected))

    def test_elites_survive_into_the_next_generation(self, planted, objective):
        cohort, _ = planted
        config = GAConfig(population_size=30, generations=12, quotient_aware=True,
                          equivalence=EquivalenceConfig(epsilon=0.1, min_pts=3, tau=5), seed=6)
        record = run_ga(cohort, config, objective)
        first = [row for row in record.classes if row["generation"] == 1]
        assert first
        assert record.trace[1]["generation_best"] >= max(row["elite_fitness"] for row in first)

    def test_never_beats_the_oracle(self, planted, objective, universe):
        cohort, _ = planted
        oracle = exhaustive_search(cohort, universe, objective, RuleSemantics.LEVEL_SETS)
        for seed in range(3):
            for quotient in (False, True):
                config = GAConfig(population_size=20, generations=20, quotient_aware=quotient, seed=seed)
                record = run_ga(cohort, config, objective, universe)
                assert record.best_fitness <= oracle.best_fitness + 1e-9

    def test_infeasible_population(self):
        schema = example_schema()
        cohort = cohort_from_rows(schema, uniform_rows(schema, 5))
        record = run_ga(cohort, GAConfig(population_size=4, generations=2, seed=0),
                        ObjectiveConfig(min_subgroup_size=50))
        assert not record.feasible
        assert record.best_fitness == -1.0e9


class RecordingGA(GeneticAlgorithm):
    """Keeps a copy of every population handed to the evaluator"""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.populations = []

    def _evaluate(self, population):
        self.populations.append(population.copy())
        return super()._evaluate(population)


def categorical_atoms(ga, genes):
    vector = to_atomic_vector(ga.chromosome(genes), ga.universe)
    return {i for i in vector.conjuncts if ga.universe[i].is_categorical}


class TestGenerationStep:
    @pytest.mark.parametrize("quotient", [False, True])
    def test_population_size_is_constant(self, planted, objective, universe, quotient):
        cohort, _ = planted
        config = GAConfig(population_size=12, generations=8, quotient_aware=quotient,
                          equivalence=EquivalenceConfig(epsilon=0.1, min_pts=3, tau=2), seed=2)
        ga = RecordingGA(cohort, config, objective, universe)
        ga.run()
        assert len(ga.populations) == 9
        assert all(p.shape == (12, ga.layout.n_genes) for p in ga.populations)

    def test_elites_are_injected_exactly_once(self, planted, objective, universe):
        cohort, _ = planted
        config = GAConfig(population_size=30, generations=12, quotient_aware=True,
                          equivalence=EquivalenceConfig(epsilon=0.1, min_pts=3, tau=5), seed=6)
        ga = RecordingGA(cohort, config, objective, universe)
        record = ga.run()

        current = []
        for t in range(1, config.generations + 1):
            if record.trace[t]["class_count"] is not None:
                previous = ga.populations[t - 1]
                current = []
                for row in record.classes:
                    key = previous[row["elite"]].tobytes()
                    if row["generation"] == t and key not in current:
                        current.append(key)
            count = record.trace[t]["elite_count"]
            assert count == len(current)
            injected = [genes.tobytes() for genes in ga.populations[t][:count]]
            assert injected == current
            assert len(set(injected)) == count
        assert any(row["elite_count"] > 0 for row in record.trace)

    @pytest.mark.parametrize("mixed", [False, True])
    def test_crossover_combines_parent_blocks(self, mixed):
        schema = mixed_schema() if mixed else example_schema()
        cohort = generate_synthetic(schema, 300, 0.2, seed=5)
        ga = GeneticAlgorithm(cohort, GAConfig(crossover_prob=1.0, seed=0), ObjectiveConfig(min_subgroup_size=5))
        edges = [b.offset for b in ga.layout.blocks] + [ga.layout.n_genes]
        rng = np.random.default_rng(13)
        parents = ga.layout.random_genes(rng, 200)
        for a, b in zip(parents[::2], parents[1::2]):
            for child in ga._crossover(a, b, rng):
                for lo, hi in zip(edges, edges[1:]):
                    assert (np.array_equal(child[lo:hi], a[lo:hi]) or np.array_equal(child[lo:hi], b[lo:hi]))
                assert categorical_atoms(ga, child) <= categorical_atoms(ga, a) | categorical_atoms(ga, b)

    def test_crossover_cut_keeps_both_parents_genes(self, planted, objective):
        cohort, _ = planted
        ga = GeneticAlgorithm(cohort, GAConfig(crossover_prob=1.0, seed=0), objective)
        rng = np.random.default_rng(3)
        a, b = ga.layout.random_genes(rng, 2)
        c1, c2 = ga._crossover(a, b, rng)
        np.testing.assert_array_equal(np.sort(np.stack([c1, c2]), axis=0), np.sort(np.stack([a, b]), axis=0))


@pytest.mark.slow
class TestQuotientAdvantage:
    def test_quotient_hit_rate_at_least_standard(self, planted, objective, universe):
        cohort, _ = planted
        optimum = exhaustive_search(cohort, universe, objective, RuleSemantics.LEVEL_SETS).best_fitness
        hits = {False: 0, True: 0}
        for seed in range(20):
            for quotient in (False, True):
                config = GAConfig(population_size=50, generations=60, quotient_aware=quotient, seed=seed)
                record = run_ga(cohort, config, objective, universe)
                hits[quotient] += abs(record.best_fitness - optimum) <= 1e-9 * optimum
        assert hits[True] >= hits[False]

    def test_planted_suite_hit_rates(self, tmp_path):
        config = BenchmarkConfig(
            repeats=20,
            min_sizes=[10],
            param_draws=1,
            methods=["ga", "ga-quotient", "bo", "greedy"],
            seed=11,
            instances=10,
            plant=PlantConfig(size=2),
            ranges=ParamRanges(population_size=(50, 50), generations=(60, 60), bo_budget=(80, 80)),
            timing="off",
        )
        result = BenchmarkRunner(config, tmp_path / "suite").execute()
        assert result.success
        frame = pd.DataFrame(result.rows)
        assert len(frame) == 4 * 10 * 20
        hits = frame.astype({"hit_opt": float}).groupby("method")["hit_opt"].mean()
        assert hits["ga-quotient"] - hits["ga"] >= 0.10
        for ga_method in ("ga", "ga-quotient"):
            assert hits[ga_method] >= hits["bo"]
            assert hits[ga_method] >= hits["greedy"]
