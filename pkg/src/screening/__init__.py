"""
Screening-filter cost model and pipeline execution
"""

from .cost import FilterProfile, brute_force_order, expected_cost, optimal_order, read_filters, write_order
from .pipeline import PipelineResult, ScreeningFilter, atom_filter, run_pipeline

__all__ = [
    "FilterProfile",
    "PipelineResult",
    "ScreeningFilter",
    "atom_filter",
    "brute_force_order",
    "expected_cost",
    "optimal_order",
    "read_filters",
    "run_pipeline",
    "write_order",
]
