"""Optimal k-thresholding sparse recovery: algorithms, exact RIP tools, benchmarks."""
__version__ = "0.1.0"

from .operators import (
    BudgetExceededError,
    QpConfig,
    hard_threshold,
    optimal_k_threshold_exhaustive,
    capped_simplex_project,
    compression_qp_solve,
)
from .algorithms import AlgorithmConfig, RecoveryResult, recover
from .instances import GeneratorConfig, ProblemInstance, make_instance, rip_constant_exact
