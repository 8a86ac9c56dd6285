"""
Core functionality: rules, cohorts, the objective, equivalence classes and the benchmark
"""

from .config import BenchmarkConfig, load_config, load_schema
from .cohort import Cohort, Schema, generate_planted_optimum, generate_synthetic, load_csv
from .objective import RuleEvaluator, RuleSemantics, apply_rule, evaluate, fold_change
from .quotient import detect_classes, dbscan_1d
from .rules import AtomicRule, BitRule, RuleUniverse, compose, decode, encode, hamming

__all__ = [
    'BenchmarkConfig',
    'load_config',
    'load_schema',
    'Cohort',
    'Schema',
    'generate_planted_optimum',
    'generate_synthetic',
    'load_csv',
    'RuleEvaluator',
    'RuleSemantics',
    'apply_rule',
    'evaluate',
    'fold_change',
    'detect_classes',
    'dbscan_1d',
    'AtomicRule',
    'BitRule',
    'RuleUniverse',
    'compose',
    'decode',
    'encode',
    'hamming',
]
