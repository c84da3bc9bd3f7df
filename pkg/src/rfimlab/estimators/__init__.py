"""Quenched and disorder-averaged statistics."""

from .bank import SampleBank
from .bounds import free_energy_variance, overlap_fluctuation_bound, replica_symmetry_trend
from .correlations import admissible_tuples, correlation_uniformity, tuple_correlations
from .magnetization import magnetization_stats, pure_state_moment_test
from .overlap import gg_residual, nsa_stats, rsb_stats, ultrametric_stats
from .quenched import (
    DisorderSweep,
    EngineOptions,
    EstimatorError,
    QuenchedRecord,
    compute_records,
)
from .reweight import mgf_gap, reweighted_expectation, reweighted_pair_expectation

__all__ = [
    "SampleBank", "DisorderSweep", "EngineOptions", "EstimatorError", "QuenchedRecord",
    "compute_records", "reweighted_expectation", "reweighted_pair_expectation", "mgf_gap",
    "rsb_stats", "nsa_stats", "ultrametric_stats", "gg_residual", "magnetization_stats",
    "pure_state_moment_test", "correlation_uniformity", "tuple_correlations",
    "admissible_tuples", "free_energy_variance", "replica_symmetry_trend",
    "overlap_fluctuation_bound",
]
