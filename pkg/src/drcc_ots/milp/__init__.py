"""Embedded LP and MILP solving on a sparse model IR."""
from .bnb import MilpOptions, MilpResult, MilpStatus, relative_gap, solve_milp
from .lp import LpResult, LpSession, LpStatus, certify, solve_lp
from .model import Affine, MilpModel, parse_lp_text

__all__ = [
    "Affine",
    "LpResult",
    "LpSession",
    "LpStatus",
    "MilpModel",
    "MilpOptions",
    "MilpResult",
    "MilpStatus",
    "certify",
    "parse_lp_text",
    "relative_gap",
    "solve_lp",
    "solve_milp",
]
