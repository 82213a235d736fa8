"""Stein variational gradient descent and kernelized Stein discrepancy tools."""

__version__ = "0.1.0"

from .core import (
    InvalidArgumentError,
    NonFiniteScoreError,
    NumericalFailureError,
    ParticleEnsemble,
    RngStream,
    TargetDensity,
    UnsupportedCapabilityError,
    ensemble_from_gaussian,
)
from .kernels import BandwidthPolicy, RbfKernel, median_bandwidth
from .ksd import KsdEstimate, ksd_squared
from .svgd import AdaGrad, PolynomialDecay, SvgdConfig, SvgdResult, run_svgd, svgd_direction
from .targets import BlrPosterior, GaussianMixture, gaussian, bimodal_mixture
