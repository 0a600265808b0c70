"""Sampling discretization of L_q norms for trigonometric polynomials.

Modules
-------
spaces
    Frequency sets, hyperbolic crosses, grids and norms.
pointsets
    Point sets, q=2 certification, general-q brackets and searches.
entropy
    Surrogate unit balls, greedy nets and entropy-number brackets.
sandwich
    Net ladders and the piecewise-constant sandwich decomposition.
concentration
    Tail bounds, union-bound budgets and Monte Carlo checks.
cli
    Command-line experiment runner.
"""
from .errors import (ConstraintViolation, DegenerateDraw, DomainError, InvalidLadder, NormalizationError,
                     PremiseFailed, SampDiscError, SearchExhausted, SurrogateTooCoarse, UnderResolvedGrid)
from .spaces import (FrequencySet, Grid, TrigPoly, evaluate, frequency_range, hyperbolic_cross,
                     hyperbolic_cross_size, norm_lq, rho_block, sup_norm)
from .pointsets import (DiscretizationReport, PointSet, bracket_general_q, certify_q2, equispaced,
                        sample_grid, sample_uniform, search_pointset)
from .entropy import BallSampler, entropy_number_bracket, greedy_net, packing_lower
from .sandwich import build_ladder, choose_parameters, decompose, check_sandwich, sampled_norm_check
from .concentration import bernstein_tail, mc_tail, union_bound_m, ladder_budget, theorem_budget

__version__ = "0.1.0"

__all__ = [
    "SampDiscError", "DomainError", "UnderResolvedGrid", "DegenerateDraw", "NormalizationError",
    "SurrogateTooCoarse", "InvalidLadder", "PremiseFailed", "ConstraintViolation", "SearchExhausted",
    "FrequencySet", "Grid", "TrigPoly", "evaluate", "frequency_range", "hyperbolic_cross",
    "hyperbolic_cross_size", "norm_lq", "rho_block", "sup_norm",
    "DiscretizationReport", "PointSet", "bracket_general_q", "certify_q2", "equispaced",
    "sample_grid", "sample_uniform", "search_pointset",
    "BallSampler", "entropy_number_bracket", "greedy_net", "packing_lower",
    "build_ladder", "choose_parameters", "decompose", "check_sandwich", "sampled_norm_check",
    "bernstein_tail", "mc_tail", "union_bound_m", "ladder_budget", "theorem_budget",
    "__version__",
]
