"""
subgroup-quotient - conjunctive rule discovery on the Boolean hypercube
"""

__version__ = "0.1.0"
__author__ = "subgroup-quotient"
__description__ = "Quotient-aware search for optimal conjunctive rules, with GA, BO and exhaustive baselines"

from .core import BitRule, Cohort, RuleUniverse, apply_rule, encode, evaluate
from .optimizers import exhaustive_search, greedy_search, run_bo, run_ga
from .screening import expected_cost, optimal_order

__all__ = [
    'BitRule',
    'Cohort',
    'RuleUniverse',
    'apply_rule',
    'encode',
    'evaluate',
    'exhaustive_search',
    'greedy_search',
    'run_bo',
    'run_ga',
    'expected_cost',
    'optimal_order',
]
