"""Wasserstein-based generalisation-error certificates for neural-network interpolants."""
from .errors import ConfigError, NumericalError
from .measures import EmpiricalMeasure, PointCloud, SamplingDistribution, Seed, pushforward_residual, sample_points
from .network import MlpParams, MlpSpec, lipschitz_lower_empirical, lipschitz_upper, mlp_forward, param_count
from .training import TargetFunction, TrainSettings, discrete_loss, population_risk_estimate, train
from .transport import brute_force_wasserstein, sinkhorn, wasserstein_1d, wasserstein_exact, wasserstein_to_dirac

__version__ = "0.1.0"
