"""Deterministic particle simulation of opinion densities coupled to an
evolving Euclidean interaction network."""

__version__ = "0.1.0"

from .core import (AgentInit, AttitudeParams, ATTITUDE_PRESETS, ParticleState,
                   PhiSpec, RunParams, Scenario, TabulatedDensity,
                   TruncatedGaussian, Violation, sample_initial_conditions,
                   validate)
from .dpa import (Derivative, ScenarioError, StepCollapseError, Trajectory,
                  discrete_densities, discrete_mean, initial_state,
                  quantile_partition, rhs, simulate, step_euler, step_rk4)
from .kernels import (KernelSet, attitude_zeta, kernel_K_model, kernels_for,
                      mobility_A_model, model_kernels, network_velocity_model,
                      omega, phi_eval)
from .metrics import (MetricsRecord, bimodality_gap, cluster_opinion_spread,
                      compute_metrics, mean_opinion_histogram,
                      network_clusters, polarization_index)
from .transport import (DensityView, PseudoInverse, empirical_wasserstein_gap,
                        first_moment, pseudo_inverse, reconstruct,
                        total_variation, wasserstein1)

__all__ = [
    "AgentInit", "AttitudeParams", "ATTITUDE_PRESETS", "ParticleState",
    "PhiSpec", "RunParams", "Scenario", "TabulatedDensity",
    "TruncatedGaussian", "Violation", "sample_initial_conditions", "validate",
    "Derivative", "ScenarioError", "StepCollapseError", "Trajectory",
    "discrete_densities", "discrete_mean", "initial_state",
    "quantile_partition", "rhs", "simulate", "step_euler", "step_rk4",
    "KernelSet", "attitude_zeta", "kernel_K_model", "kernels_for",
    "mobility_A_model", "model_kernels", "network_velocity_model", "omega",
    "phi_eval",
    "MetricsRecord", "bimodality_gap", "cluster_opinion_spread",
    "compute_metrics", "mean_opinion_histogram", "network_clusters",
    "polarization_index",
    "DensityView", "PseudoInverse", "empirical_wasserstein_gap",
    "first_moment", "pseudo_inverse", "reconstruct", "total_variation",
    "wasserstein1",
]
