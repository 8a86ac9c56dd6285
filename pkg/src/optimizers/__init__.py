"""
Rule search methods behind a common interface
"""

from .base import Optimizer, RunRecord
from .baselines import ExhaustiveResult, ExhaustiveSearch, GreedySearch, OracleCache, exhaustive_search, greedy_search
from .bo import BayesianOptimizer, run_bo
from .ga import Chromosome, ChromosomeLayout, GeneticAlgorithm, decode_to_rule, run_ga, to_atomic_vector
from .gp import GPState, HammingKernelParams, expected_improvement, fit_gp, gp_posterior, kernel

__all__ = [
    'Optimizer',
    'RunRecord',
    'ExhaustiveResult',
    'ExhaustiveSearch',
    'GreedySearch',
    'OracleCache',
    'exhaustive_search',
    'greedy_search',
    'BayesianOptimizer',
    'run_bo',
    'Chromosome',
    'ChromosomeLayout',
    'GeneticAlgorithm',
    'decode_to_rule',
    'run_ga',
    'to_atomic_vector',
    'GPState',
    'HammingKernelParams',
    'expected_improvement',
    'fit_gp',
    'gp_posterior',
    'kernel',
]
