"""GNSS measurement scenarios and model assembly."""

from .builder import (
    ar1_series_covariance,
    build_model,
    nuisance_posterior,
    range_error_variance,
    simulate_float_solution,
    simulate_measurements,
    succeeding_init_model,
)
from .constellation import synthetic_constellation
from .scenario import Scenario, load_los_csv, load_scenario
from .signals import measurement_set, wide_lane_transform

__all__ = [
    "Scenario", "load_scenario", "load_los_csv",
    "ar1_series_covariance", "build_model", "succeeding_init_model",
    "nuisance_posterior", "range_error_variance",
    "simulate_float_solution", "simulate_measurements",
    "synthetic_constellation", "measurement_set", "wide_lane_transform",
]
