"""Complete solvable models for each chance-constrained variant."""
from .bcd import BcdState, solve_multimodal_bcd
from .deterministic import build_deterministic
from .gaussian import build_gaussian, max_soc_violation
from .mad import add_mad_block, build_mad, worst_case_probability
from .problem import Problem, Solution, build_backbone, load_solution, solve
from .saa import build_saa, build_wasserstein

__all__ = [
    "BcdState",
    "Problem",
    "Solution",
    "add_mad_block",
    "build_backbone",
    "build_deterministic",
    "build_gaussian",
    "build_mad",
    "build_saa",
    "build_wasserstein",
    "load_solution",
    "max_soc_violation",
    "solve",
    "solve_multimodal_bcd",
    "worst_case_probability",
]
