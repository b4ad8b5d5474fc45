"""Stein-method diffusion approximation toolkit for M/M/1 and M/M/inf queues.

Exact path algebra and fractional Sobolev norms, marked Poisson point
processes with divergence and Campbell-Mecke checks, queue simulators,
orthogonal kernel families with their Stein bounds, the integral transform
relating the Ornstein-Uhlenbeck limit to time-changed Brownian motion, and a
Monte Carlo harness for rate experiments.
"""
from . import bounds, harness, paths, ppp, queues, stein, theta
from .errors import (ConfigError, DivergenceError, DomainError, FitError, FunctionalError,
                     ParameterError, PreconditionError, ResolutionError, ShapeError,
                     SteinQueuesError, ToleranceError, UnsupportedError,
                     UnsupportedKernelError, UnsupportedRegimeError)
from .harness import (ExperimentConfig, TestFunctionalPanel, default_panel,
                      estimate_panel_distance, rate_fit, run_experiment)
from .paths import Path, NormOrder, sobolev_norm, sup_distance, interpolate_affine
from .queues import QueueParams, simulate_mm1, simulate_mminfty_events, simulate_mminfty_trapeze
from .stein import build_family, gram_matrix, stein_bound
from .theta import theta_forward, theta_inverse

__version__ = "0.1.0"
