"""
Tests for the Hamming-kernel GP, Expected Improvement and the BO loop
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError
from scipy.stats import norm

from helpers import cohort_from_rows, example_schema, uniform_rows
from src.core.cohort import generate_planted_optimum
from src.core.config import BOConfig, EquivalenceConfig, GAConfig, ObjectiveConfig, default_schema
from src.core.errors import IllConditionedModelError
from src.core.objective import RuleEvaluator, RuleSemantics
from src.core.quotient import detect_classes
from src.core.rules import BitRule, RuleUniverse, build_universe, category_eq
from src.optimizers.baselines import exhaustive_search
from src.optimizers.bo import BayesianOptimizer, run_bo
from src.optimizers.ga import run_ga
from src.optimizers.gp import (
    GPState,
    HammingKernelParams,
    expected_improvement,
    fit_gp,
    gp_posterior,
    hamming_matrix,
    kernel,
    kernel_matrix,
)


def distinct_rows(rng, count, n):
    rows = set()
    while len(rows) < count:
        rows.add(tuple(rng.integers(0, 2, size=n).tolist()))
    return np.array(sorted(rows), dtype=np.uint8)


def stratified_ei(mean, sd, best, draws=1_000_000):
    """Expected improvement by midpoint quadrature over normal quantiles"""
    z = norm.ppf((np.arange(draws) + 0.5) / draws)
    return float(np.mean(np.maximum(mean + sd * z - best, 0.0)))


class TestKernel:
    def test_self_similarity(self):
        params = HammingKernelParams(theta0=2.0, theta1=0.7, theta2=0.01)
        b = BitRule.from_string("0110")
        assert kernel(b, b, params) == pytest.approx(2.01)

    def test_direct_substitution(self):
        params = HammingKernelParams(theta0=1.0, theta1=0.5, theta2=0.0)
        b1, b2 = BitRule.from_string("00100001"), BitRule.from_string("00000100")
        assert kernel(b1, b2, params) == pytest.approx(np.exp(-1.5))

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            HammingKernelParams(theta0=0.0)
        with pytest.raises(ValueError):
            HammingKernelParams(theta2=-1.0)

    def test_hamming_matrix(self):
        X = np.array([[0, 0, 1], [1, 1, 1]], dtype=np.uint8)
        assert hamming_matrix(X, X).tolist() == [[0, 2], [2, 0]]

    @pytest.mark.parametrize("size", [30, 100, 200])
    @pytest.mark.parametrize("seed", range(5))
    def test_kernel_matrix_is_positive_definite(self, seed, size):
        rng = np.random.default_rng(seed)
        X = distinct_rows(rng, size, 16)
        params = HammingKernelParams(theta0=float(rng.uniform(0.1, 5)), theta1=float(rng.uniform(0.05, 3)),
                                     theta2=1e-6)
        K = kernel_matrix(X, X, params)
        assert np.allclose(K, K.T)
        assert np.linalg.eigvalsh(K).min() > 0
        GPState(X, rng.normal(size=size), params, max_jitter_steps=0)


class TestPosterior:
    @pytest.mark.parametrize("seed", range(5))
    def test_matches_a_dense_solve(self, seed):
        rng = np.random.default_rng(seed)
        X = distinct_rows(rng, 5, 10)
        y = rng.normal(size=5)
        params = HammingKernelParams(theta0=1.3, theta1=0.4, theta2=1e-3)
        query = BitRule.from_bits(rng.integers(0, 2, size=10).tolist())

        mean, variance = gp_posterior(GPState(X, y, params), query)
        K = kernel_matrix(X, X, params)
        k = kernel_matrix(query.to_array()[None, :], X, params)[0]
        k_qq = params.theta0 + params.theta2
        assert mean == pytest.approx(float(k @ np.linalg.solve(K, y)), abs=1e-10)
        assert variance == pytest.approx(float(k_qq - k @ np.linalg.solve(K, k)), abs=1e-10)

    def test_interpolates_observations(self):
        rng = np.random.default_rng(3)
        X = distinct_rows(rng, 6, 10)
        y = rng.normal(size=6)
        state = GPState(X, y, HammingKernelParams(theta0=1.0, theta1=1.0, theta2=1e-12))
        means, variances = state.predict(X)
        np.testing.assert_allclose(means, y, atol=1e-8)
        assert np.all(variances < 1e-8)

    def test_prior_recovered_without_correlation(self):
        X = np.array([[0, 0, 0, 0], [1, 1, 0, 0]], dtype=np.uint8)
        params = HammingKernelParams(theta0=2.0, theta1=60.0, theta2=1e-6)
        mean, variance = gp_posterior(GPState(X, [3.0, -1.0], params), BitRule.from_string("0011"))
        assert mean == pytest.approx(0.0, abs=1e-12)
        assert variance == pytest.approx(2.0 + 1e-6, rel=1e-9)

    def test_duplicate_inputs_need_jitter(self):
        X = np.array([[1, 0, 1], [1, 0, 1]], dtype=np.uint8)
        params = HammingKernelParams(theta0=1.0, theta1=1.0, theta2=0.0)
        with pytest.raises(IllConditionedModelError):
            GPState(X, [1.0, 1.0], params, max_jitter_steps=0)
        assert GPState(X, [1.0, 1.0], params, max_jitter_steps=6).jitter > 0

    def test_fit_picks_the_best_likelihood(self):
        rng = np.random.default_rng(4)
        X = distinct_rows(rng, 12, 8)
        y = rng.normal(size=12)
        grid0, grid1 = [0.3, 1.0, 3.0], [0.1, 0.5, 2.0]
        state = fit_gp(X, y, grid0, grid1)
        best = max(GPState(X, y, HammingKernelParams(t0, t1, 1e-6 * t0)).log_marginal_likelihood()
                   for t0 in grid0 for t1 in grid1)
        assert state.log_marginal_likelihood() == pytest.approx(best)


class TestExpectedImprovement:
    def test_no_uncertainty_no_improvement(self):
        assert expected_improvement(1.0, 0.0, 1.0) == 0.0

    def test_no_uncertainty_with_improvement(self):
        assert expected_improvement(1.5, 0.0, 1.0) == pytest.approx(0.5)

    def test_symmetric_case(self):
        assert expected_improvement(2.0, 1.0, 2.0) == pytest.approx(0.3989, abs=1e-4)

    def test_matches_quadrature(self):
        assert expected_improvement(0.5, 4.0, 0.0) == pytest.approx(stratified_ei(0.5, 2.0, 0.0), abs=1e-3)

    @pytest.mark.parametrize("seed", range(20))
    def test_random_triples(self, seed):
        rng = np.random.default_rng(seed)
        mean, sd, best = rng.normal(), rng.uniform(0.1, 3.0), rng.normal()
        assert expected_improvement(mean, sd ** 2, best) == pytest.approx(stratified_ei(mean, sd, best), abs=1e-3)

    def test_vectorised(self):
        ei = expected_improvement(np.array([0.0, 1.0]), np.array([1.0, 0.0]), 0.5)
        assert ei.shape == (2,)
        assert ei[1] == pytest.approx(0.5)

    @settings(max_examples=300, deadline=None)
    @given(st.floats(-50, 50), st.floats(0, 100), st.floats(-50, 50))
    def test_never_negative(self, mean, variance, best):
        assert expected_improvement(mean, variance, best) >= 0.0


def small_universe():
    return RuleUniverse((category_eq(0, "DED", "mild"), category_eq(1, "Gender", "female"),
                         category_eq(2, "MGD", "present")))


class TestBayesianOptimizer:
    def test_budget_equal_to_initial_design(self, random_cohort, universe, objective):
        config = BOConfig(budget=8, initial_design=8, seed=3)
        record = run_bo(random_cohort, universe, config, objective)
        assert record.extra["evaluations"] == 8
        assert len(record.trace) == 8
        assert all(row["ei"] is None for row in record.trace)
        assert record.best_fitness == max(row["best_fitness"] for row in record.trace)

    def test_budget_below_initial_design(self):
        with pytest.raises(ValidationError):
            BOConfig(budget=5, initial_design=10)

    def test_identical_traces_for_a_fixed_seed(self, planted, universe, objective):
        cohort, _ = planted
        config = BOConfig(budget=20, initial_design=6, seed=11)
        first = run_bo(cohort, universe, config, objective)
        second = run_bo(cohort, universe, config, objective)
        assert first.trace == second.trace
        assert first.best_rule_bits == second.best_rule_bits

    def test_incumbent_is_monotone(self, planted, universe, objective):
        cohort, _ = planted
        record = run_bo(cohort, universe, BOConfig(budget=25, initial_design=5, seed=2), objective)
        trace = record.best_trace()
        assert len(trace) == 25
        assert all(b >= a for a, b in zip(trace, trace[1:]))

    def test_stops_when_the_cube_is_exhausted(self, universe, objective):
        schema = example_schema()
        cohort = cohort_from_rows(schema, uniform_rows(schema, 200, seed=7))
        cohort = cohort.with_biomarker(np.random.default_rng(7).uniform(1, 5, size=cohort.size))
        tiny = small_universe()
        record = run_bo(cohort, tiny, BOConfig(budget=20, initial_design=3, seed=0), objective)
        assert record.extra["evaluations"] == 7
        assert record.best_fitness == exhaustive_search(cohort, tiny, objective).best_fitness

    def test_quotient_mode(self, planted, universe, objective):
        cohort, _ = planted
        config = BOConfig(budget=20, initial_design=8, quotient_aware=True,
                          equivalence=EquivalenceConfig(epsilon=0.2, min_pts=2), seed=5)
        record = run_bo(cohort, universe, config, objective, RuleSemantics.LEVEL_SETS)
        assert record.method == "bo-quotient"
        assert record.extra["evaluations"] == 20
        assert any(row["training_size"] is not None and row["training_size"] < row["iteration"]
                   for row in record.trace)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 40), st.booleans()), min_size=1, max_size=60))
    def test_quotient_training_set_keeps_one_observation_per_class(self, observations):
        schema = example_schema()
        cohort = cohort_from_rows(schema, uniform_rows(schema, 20))
        equivalence = EquivalenceConfig(epsilon=0.2, min_pts=2)
        config = BOConfig(quotient_aware=True, equivalence=equivalence)
        optimizer = BayesianOptimizer(cohort, build_universe(schema), config, ObjectiveConfig())
        feasible = np.array([ok for _, ok in observations])
        values = np.where(feasible, np.array([v for v, _ in observations]) / 10.0, -1.0e9)
        index = np.arange(values.size)
        X = ((index[:, None] >> np.arange(6)) & 1).astype(np.uint8)

        X_fit, y_fit = optimizer._training_set(X, values, feasible)
        kept = (X_fit.astype(np.int64) << np.arange(6)).sum(axis=1).tolist()
        assert len(set(kept)) == len(kept)

        classes = detect_classes(values, np.ones(values.size, dtype=bool), equivalence, feasible=feasible)
        for members, elite in zip(classes.classes, classes.elites):
            assert set(members) & set(kept) == {elite}
        clustered = {i for members in classes.classes for i in members}
        assert set(index.tolist()) - clustered <= set(kept)

        floor = values[feasible].min() - 1.0 if feasible.any() else 0.0
        np.testing.assert_array_equal(y_fit, np.where(feasible, values, floor)[kept])

    def test_shares_an_evaluator_cache(self, planted, universe, objective):
        cohort, _ = planted
        evaluator = RuleEvaluator(cohort, objective, universe)
        config = BOConfig(budget=12, initial_design=4, seed=1)
        run_bo(cohort, universe, config, objective, evaluator=evaluator)
        size = len(evaluator.cache)
        run_bo(cohort, universe, config, objective, evaluator=evaluator)
        assert len(evaluator.cache) == size
        assert evaluator.cache.hits >= 12

    def test_never_beats_the_oracle(self, planted, universe, objective):
        cohort, _ = planted
        optimum = exhaustive_search(cohort, universe, objective).best_fitness
        for seed in range(3):
            record = run_bo(cohort, universe, BOConfig(budget=30, initial_design=8, seed=seed), objective)
            assert record.best_fitness <= optimum + 1e-9


@pytest.mark.slow
class TestBenchmarkDirection:
    def test_bo_trails_quotient_ga(self):
        schema = default_schema().to_schema()
        universe = build_universe(schema)
        atoms = universe.ids_from_labels(["DED=moderate", "MGD=present"])
        cohort, _ = generate_planted_optimum(schema, 500, seed=5, planted_rule=atoms, effect=10.0,
                                             universe=universe)
        objective = ObjectiveConfig(min_subgroup_size=10)
        semantics = RuleSemantics.LEVEL_SETS
        optimum = exhaustive_search(cohort, universe, objective, semantics).best_fitness

        bo_ratios, ga_ratios = [], []
        for seed in range(20):
            bo = run_bo(cohort, universe, BOConfig(budget=80, seed=seed), objective, semantics)
            ga = run_ga(cohort, GAConfig(population_size=50, generations=60, quotient_aware=True, seed=seed),
                        objective, universe)
            bo_ratios.append(max(bo.best_fitness, 0.0) / optimum)
            ga_ratios.append(max(ga.best_fitness, 0.0) / optimum)
        assert 0.5 <= np.mean(bo_ratios) <= 1.0
        assert np.mean(bo_ratios) <= np.mean(ga_ratios)
