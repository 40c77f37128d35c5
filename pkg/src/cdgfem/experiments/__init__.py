"""Reproduction harness for the unit-square layer benchmark."""
from .problem import ExactSolution, benchmark_spec, velocity, velocity_divergence
from .runner import (CaseResult, ExperimentConfig, block_elements, run_case, run_figure3,
                     run_figure4, run_table1, run_violation_case, violation_elements)
from ..special import erf, erfc
