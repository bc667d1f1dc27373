"""Dense simplex and branch-and-bound backend."""

from .lp import EQ, GE, LE, LpProblem, SimplexBasis, solve_lp
from .lpformat import write_lp
from .mip import MipConfig, SolutionPool, relative_gap, solve_mip, warmstart_pool_lookup

__all__ = [
    "EQ", "GE", "LE", "LpProblem", "SimplexBasis", "solve_lp", "write_lp",
    "MipConfig", "SolutionPool", "relative_gap", "solve_mip", "warmstart_pool_lookup",
]
