"""Simulation and sampling laboratory for vertex-reinforced jump processes.

Exact event-driven simulation of the reinforced walk, its time change and
occupation statistics; the explicit random-environment density with its
determinant term, gradient, and convexity diagnostics; Metropolis, exact
tree, and auxiliary-variable Gibbs samplers for the environment; the
conditional random walk in that environment with picture-equivalence checks;
bond-percolation sparsity experiments; and the target-function bookkeeping
of the slow-deformation argument.
"""

__version__ = "0.1.0"

from .density import (DensityModel, UField, grad_log_density, hessian_log_minor,
                      laplacian_matrix, log_density, log_minor_determinant,
                      minor_determinant, spanning_tree_sum)
from .gibbs import sample_field_gibbs
from .graphs import (BoxSpec, WeightedGraph, ball_2d, build_box_2d, build_wired_box,
                     graph_distance)
from .percolation import (PercolationSample, cluster_radius, radius_sum_experiment,
                          radius_tail_experiment, sample_union_percolation)
from .perturbation import (TargetFunction, build_tau, component_stats, lipschitz_scale,
                           tau_prime)
from .rwre import (domination_diagnostic, domination_threshold, equivalence_test,
                   q_estimator, simulate_rwre)
from .sampling import (ChainDiagnostics, McmcConfig, WardEstimate, sample_field_mcmc,
                       sample_field_tree_exact, ward_estimate)
from .vrjp import (LocalTimeVector, TimeChangeRecord, VrjpTrajectory, q_statistics,
                   simulate_vrjp, time_change, write_trajectory_csv)

__all__ = [
    "BoxSpec", "ChainDiagnostics", "DensityModel", "LocalTimeVector", "McmcConfig",
    "PercolationSample", "TargetFunction", "TimeChangeRecord", "UField", "VrjpTrajectory",
    "WardEstimate", "WeightedGraph", "ball_2d", "build_box_2d", "build_tau",
    "build_wired_box", "cluster_radius", "component_stats", "domination_diagnostic",
    "domination_threshold", "equivalence_test", "grad_log_density", "graph_distance",
    "hessian_log_minor", "laplacian_matrix", "lipschitz_scale", "log_density",
    "log_minor_determinant", "minor_determinant", "q_estimator", "q_statistics",
    "radius_sum_experiment", "radius_tail_experiment", "sample_field_gibbs",
    "sample_field_mcmc", "sample_field_tree_exact", "sample_union_percolation",
    "simulate_rwre", "simulate_vrjp", "spanning_tree_sum", "tau_prime", "time_change",
    "ward_estimate", "write_trajectory_csv",
]
