"""MAP inference for continuous-label MRFs via piecewise-polynomial duals.

The package assembles the local-marginal-polytope relaxation of a
graph-structured energy with metric pairwise costs into a structured
semidefinite saddle-point program over per-piece moment vectors and
Lipschitz-constrained piecewise-polynomial dual potentials, solves it with a
first-order primal-dual method, and rounds the moments back to a labeling.
"""

from .poly import Interval, Polynomial, PiecewisePolynomial
from .graph import Graph, chain_graph, grid_graph
from .model import DualConfig, Metric, Problem, assemble
from .solver import SolverOptions, Solution, pdhg_solve, make_dual_feasible, dual_energy, support_lipschitz
from .rounding import round_mode_mean, round_mean, rounded_energy
from .oracle import GridSpec, dp_chain, grid_min, relaxation_value_chain

__version__ = "0.1.0"

__all__ = [
    "Interval",
    "Polynomial",
    "PiecewisePolynomial",
    "Graph",
    "chain_graph",
    "grid_graph",
    "DualConfig",
    "Metric",
    "Problem",
    "assemble",
    "SolverOptions",
    "Solution",
    "pdhg_solve",
    "make_dual_feasible",
    "dual_energy",
    "support_lipschitz",
    "round_mode_mean",
    "round_mean",
    "rounded_energy",
    "GridSpec",
    "dp_chain",
    "grid_min",
    "relaxation_value_chain",
    "__version__",
]
