"""Poisson-Gaussian noise modelling from paired noisy/noise-free images."""

from .cumulants import MomentSummary, clean_moments, k_statistics, summarize_pair
from .estimators import (
    DegenerateImageError,
    Estimate,
    EstimationError,
    Method,
    NoRealRootError,
    RankDeficientError,
    estimate_cumulant,
    estimate_var,
    solve_cumulant_system,
)
from .imageio import ImageBuffer, ImagePair, load_float, load_image, save_buffer
from .likelihood import LikelihoodConfig, log_likelihood, relative_ll_gap
from .noise import NoiseParams, synthesize, theoretical_moments

__version__ = "0.1.0"
