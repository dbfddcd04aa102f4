"""Numerical solver for perpetual discounted optimal stopping problems."""

from .core import RegionSet, SignedMeasure, StateInterval, Tolerances, find_root, integrate
from .diffusion import (ProcessSpec, RewardBundle, apply_generator, catalog,
                        check_inversion, green, hitting_transform, sigma_measure)
from .rewards import make_bundle, reward_form, smoothed_x_plus
from .onesided import (SmoothFitReport, ThresholdResult, find_threshold,
                       find_threshold_inequality, smooth_fit, sufficient_b_scan,
                       value_function, verify_hypotheses)
from .regions import (ExpansionPair, Solution, expand_interval, merge_regions,
                      negative_set, solve_general, solve_two_sided)

__all__ = [
    "RegionSet", "SignedMeasure", "StateInterval", "Tolerances",
    "find_root", "integrate",
    "ProcessSpec", "RewardBundle", "apply_generator", "catalog",
    "check_inversion", "green", "hitting_transform", "sigma_measure",
    "make_bundle", "reward_form", "smoothed_x_plus",
    "SmoothFitReport", "ThresholdResult", "find_threshold",
    "find_threshold_inequality", "smooth_fit", "sufficient_b_scan",
    "value_function", "verify_hypotheses",
    "ExpansionPair", "Solution", "expand_interval", "merge_regions",
    "negative_set", "solve_general", "solve_two_sided",
]

__version__ = "0.1.0"
