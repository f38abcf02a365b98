"""Self-paced curriculum generation over Gaussian context distributions."""

from spdl.gaussian import ContextDistribution, DegenerateFitError, fit_weighted, kl_divergence

__all__ = ["ContextDistribution", "DegenerateFitError", "fit_weighted", "kl_divergence"]
__version__ = "0.1.0"
