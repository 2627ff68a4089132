"""Simulation and verification toolkit for minimum-norm interpolation with dependent data."""

from .bounds import (BoundReport, IntegratedCovSummary, hetero_upper_bound, homo_lower_bounds,
                     homo_upper_bound, integrated_covariance, kappa_alpha, moment_rhs,
                     rate_prediction)
from .config import ExperimentConfig
from .interpolator import FitResult, certify, min_norm_fit
from .risk import RiskReport, bias_variance_terms, exact_excess_risk, mc_risk
from .sampler import BetaSpec, Model, RegressionInstance, build_model, make_beta
from .spectra import INFINITE, SpatialSpectrum, build_benign_spectrum, effective_ranks, k_star
from .temporal import TemporalSpec, ToeplitzCov, materialize

__version__ = "0.1.0"
